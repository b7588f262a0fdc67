#pragma once

namespace adafuse {

/// Keeps freed heap memory in the process instead of returning it to the OS.
/// Batched forward passes allocate and free tens of megabytes per call;
/// without this every call pays the page faults again.
void retain_heap_memory();

}  // namespace adafuse
