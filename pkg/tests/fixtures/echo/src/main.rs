use std::io::Read;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut input = String::new();
    std::io::stdin().read_to_string(&mut input).unwrap();
    print!("{}", input);
    if !args.is_empty() {
        println!("{}", args.join(" "));
    }
    if args.first().map(|a| a == "fail").unwrap_or(false) {
        std::process::exit(3);
    }
}
