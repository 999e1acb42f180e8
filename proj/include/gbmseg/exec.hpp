#pragma once

namespace gbmseg::exec {

// Serial mode runs the reference kernels; Parallel runs the OpenMP ones.
// Both partition work over independent output elements with a fixed
// per-element accumulation order, so results do not depend on thread count.
// The documented cross-mode agreement contract is 1e-6 relative.
enum class Mode { Serial, Parallel };

Mode mode();
void set_mode(Mode m);

// 0 = use the OpenMP default.
int threads();
void set_threads(int n);

} // namespace gbmseg::exec
