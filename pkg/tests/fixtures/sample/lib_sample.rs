use std::io::{self, Read};
use std::collections::HashMap;
use std::fmt::*;

static mut COUNTER: i32 = 0;
const LIMIT: usize = 8;

#[inline]
fn leaf(x: i32) -> i32 {
    x + 1
}

pub unsafe fn middle(p: *mut i32) -> i32 {
    COUNTER += 1;
    *p = leaf(*p);
    *p
}

struct Acc {
    total: i32,
}

impl Acc {
    fn push(&mut self, v: i32) {
        self.total += v;
    }
}

fn top(v: &mut i32) -> usize {
    let m: HashMap<i32, i32> = HashMap::new();
    let r = unsafe { middle(v) };
    let mut acc = Acc { total: 0 };
    acc.push(r);
    m.len() + LIMIT
}

fn ping(n: u32) -> u32 {
    if n == 0 { 0 } else { pong(n - 1) }
}

fn pong(n: u32) -> u32 {
    if n == 0 { 1 } else { ping(n - 1) }
}
