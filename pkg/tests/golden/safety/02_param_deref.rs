unsafe fn read(p: *const i32) -> i32 {
    *p
}
