#pragma once

namespace flowi2i {

/// Keeps large temporaries on the heap instead of fresh mmap regions, which
/// otherwise dominate the cost of recording autograd tapes. Process-wide;
/// call once from main. No-op where unsupported.
void tune_allocator();

}  // namespace flowi2i
