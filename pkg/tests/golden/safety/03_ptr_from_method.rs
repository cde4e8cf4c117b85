fn get(v: &mut Vec<i32>) -> i32 {
    let p = v.as_mut_ptr();
    unsafe {
        *p.add(1) = 5;
        *p
    }
}
