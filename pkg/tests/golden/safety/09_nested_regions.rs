unsafe fn outer(p: *mut i32) {
    // comment inside
    unsafe {
        *p += 1;
    }

    *p *= 2;
}
