struct Buf {
    data: Vec<u8>,
}

impl Buf {
    unsafe fn peek(&self, i: usize) -> u8 {
        *self.data.get_unchecked(i)
    }
}

unsafe fn sum(v: &[u8]) -> u32 {
    v.iter().map(|x| *x as u32).sum()
}

fn run(b: &Buf) -> u32 {
    unsafe { b.peek(0) as u32 + sum(&b.data) }
}
