fn describe() -> &'static str {
    // unsafe { *p } as *mut i32
    let s = "unsafe { *p as *mut u8 }";
    /* let q: *mut i32 = 0 as *mut i32; */
    s
}
