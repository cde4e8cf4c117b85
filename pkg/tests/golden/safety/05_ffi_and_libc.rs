extern "C" {
    fn abs(x: i32) -> i32;
}

fn main() {
    let a = unsafe { abs(-3) };
    let b = unsafe { libc::rand() };
    println!("{} {}", a, b);
}
