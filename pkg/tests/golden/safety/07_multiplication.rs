fn area(w: i32, h: i32) -> i32 {
    let s = w * h;
    s * 2
}
