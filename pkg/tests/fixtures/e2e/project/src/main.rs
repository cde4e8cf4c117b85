use std::io::Read;

static mut SCALE: i32 = 2;

unsafe fn sum(p: *const i32, n: usize) -> i32 {
    let mut total = 0;
    let mut i = 0;
    while i < n {
        total += *p.add(i);
        i += 1;
    }
    total
}

unsafe fn scaled(p: *const i32, n: usize) -> i32 {
    sum(p, n) * SCALE
}

fn main() {
    let mut input = String::new();
    std::io::stdin().read_to_string(&mut input).unwrap();
    let v: Vec<i32> = input.split_whitespace().map(|t| t.parse().unwrap()).collect();
    let r = unsafe { scaled(v.as_ptr(), v.len()) };
    println!("{}", r);
}
