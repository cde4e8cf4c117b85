struct Node {
    next: *mut Node,
    val: i32,
}

static mut HEAD: *mut Node = 0 as *mut Node;

unsafe fn first() -> i32 {
    (*HEAD).val
}

fn walk(n: &Node) -> i32 {
    unsafe { (*n.next).val }
}
