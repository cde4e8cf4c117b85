fn make() -> Box<i32> {
    let raw: *mut i32 = Box::into_raw(Box::new(7));
    let f = |q: *mut i32| q.is_null();
    if f(raw) {
        return Box::new(0);
    }
    unsafe { Box::from_raw(raw) }
}
