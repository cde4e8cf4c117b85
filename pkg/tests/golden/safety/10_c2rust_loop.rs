#[no_mangle]
pub unsafe extern "C" fn sum(mut arr: *const i32, n: i32) -> i32 {
    let mut total: i32 = 0;
    let mut i: i32 = 0;
    while i < n {
        total += *arr.offset(i as isize);
        i += 1;
    }
    return total;
}
