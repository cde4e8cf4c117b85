use std::mem;
use std::ptr;

unsafe fn helper(p: *mut u8) {
    *p = 0;
}

fn run(buf: &mut [u8; 4], src: &[u8; 4]) -> u32 {
    unsafe {
        ptr::copy_nonoverlapping(src.as_ptr(), buf.as_mut_ptr(), 4);
        helper(buf.as_mut_ptr());
        mem::transmute::<[u8; 4], u32>(*buf)
    }
}
