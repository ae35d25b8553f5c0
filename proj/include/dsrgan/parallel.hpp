#ifndef DSRGAN_PARALLEL_HPP
#define DSRGAN_PARALLEL_HPP

#include <type_traits>
#include <utility>

namespace dsrgan {

// Number of worker threads (DSRGAN_THREADS env override; defaults to 1 —
// operator-level threading is opt-in and the chosen value is recorded in
// run metadata by the training driver).
int worker_count();

namespace detail {
void parallel_for_impl(long n, void (*fn)(void*, long), void* ctx);
}

// fn(i) for i in [0,n), statically strided across workers. Callers must
// only write to disjoint state per index; reductions happen on the caller's
// side in index order so results do not depend on the worker count.
template <typename F>
void parallel_for(long n, F&& f) {
  using Fn = std::remove_reference_t<F>;
  detail::parallel_for_impl(
      n, [](void* ctx, long i) { (*static_cast<Fn*>(ctx))(i); },
      const_cast<void*>(static_cast<const void*>(&f)));
}

}  // namespace dsrgan

#endif
