unsafe fn swap_pair(pair: (*mut i32, *mut i32)) {
    let a = std::ptr::read(pair.0);
    std::ptr::write(pair.0, std::ptr::read(pair.1));
    std::ptr::write(pair.1, a);
}
