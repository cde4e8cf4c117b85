fn addr(x: &i32) -> usize {
    let p = x as *const i32;
    p as usize
}
