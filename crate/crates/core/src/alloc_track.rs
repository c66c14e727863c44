//! Heap instrumentation for benchmarks.
//!
//! Install [`TrackingAllocator`] as the `#[global_allocator]` of a binary to
//! record live bytes, the high-water mark and the largest single request
//! since the last [`reset`]. Without it installed every counter stays at 0.

use std::alloc::{GlobalAlloc, Layout, System};
use std::sync::atomic::{AtomicUsize, Ordering::Relaxed};

static CURRENT: AtomicUsize = AtomicUsize::new(0);
static PEAK: AtomicUsize = AtomicUsize::new(0);
static LARGEST: AtomicUsize = AtomicUsize::new(0);

pub struct TrackingAllocator;

fn record_alloc(size: usize) {
    let now = CURRENT.fetch_add(size, Relaxed) + size;
    PEAK.fetch_max(now, Relaxed);
    LARGEST.fetch_max(size, Relaxed);
}

unsafe impl GlobalAlloc for TrackingAllocator {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc(layout);
        if !p.is_null() {
            record_alloc(layout.size());
        }
        p
    }

    unsafe fn alloc_zeroed(&self, layout: Layout) -> *mut u8 {
        let p = System.alloc_zeroed(layout);
        if !p.is_null() {
            record_alloc(layout.size());
        }
        p
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        System.dealloc(ptr, layout);
        CURRENT.fetch_sub(layout.size(), Relaxed);
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        let p = System.realloc(ptr, layout, new_size);
        if !p.is_null() {
            CURRENT.fetch_sub(layout.size(), Relaxed);
            record_alloc(new_size);
        }
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AllocStats {
    pub current: usize,
    /// Highest live byte count since the last reset.
    pub peak: usize,
    /// Largest single allocation since the last reset.
    pub largest: usize,
}

/// Restarts the peak at the current live size and clears the largest request.
pub fn reset() {
    PEAK.store(CURRENT.load(Relaxed), Relaxed);
    LARGEST.store(0, Relaxed);
}

pub fn stats() -> AllocStats {
    AllocStats {
        current: CURRENT.load(Relaxed),
        peak: PEAK.load(Relaxed),
        largest: LARGEST.load(Relaxed),
    }
}

/// Whether the tracking allocator is installed in this process.
pub fn is_active() -> bool {
    let before = LARGEST.load(Relaxed);
    LARGEST.store(0, Relaxed);
    let probe = std::hint::black_box(vec![0u8; 3]);
    let seen = LARGEST.load(Relaxed) >= 3;
    drop(probe);
    LARGEST.fetch_max(before, Relaxed);
    seen
}
