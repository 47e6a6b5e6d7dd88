"""Compare the compiled kernels against the numpy fallback.

Times im2col, col2im, and 2x2 max pooling on float32 batches shaped
like real network stages, then one full-network forward+backward under
the active backend for context. The conv matmul itself runs on BLAS in
both backends, so whole-network times differ far less than kernel
microbenchmarks.

Usage: python3 benchmarks/bench_kernels.py [--repeats N] [--batch N]
"""
import argparse
import time

import numpy as np

from leafcnn._kernels import BACKEND, _fast, _slow


def best_of(fn, repeats):
    fn()  # warmup
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def bench_kernels(batch, repeats):
    rng = np.random.default_rng(0)
    x = rng.random((batch, 64, 64, 32), dtype=np.float32)
    pooled = rng.random((batch, 64, 64, 64), dtype=np.float32)
    k = 3
    cols = _slow.im2col(x, k)
    n, h, w, c = x.shape
    out, idx = _slow.maxpool2(pooled)
    grad = rng.random(out.shape, dtype=np.float32)

    cases = [
        ("im2col k=3", lambda impl: impl.im2col(x, k)),
        ("col2im k=3", lambda impl: impl.col2im(cols, n, h, w, c, k)),
        ("maxpool2 forward", lambda impl: impl.maxpool2(pooled)),
        ("maxpool2 backward", lambda impl: impl.maxpool2_backward(
            idx, grad, pooled.shape[1], pooled.shape[2])),
    ]
    print(f"{'kernel':<20} {'input':<18} {'fallback':>10} {'compiled':>10} {'speedup':>8}")
    for name, call in cases:
        shape = str(x.shape if "im2col" in name or "col2im" in name else pooled.shape)
        slow_ms = best_of(lambda: call(_slow), repeats) * 1e3
        if _fast is not None:
            fast_ms = best_of(lambda: call(_fast), repeats) * 1e3
            print(f"{name:<20} {shape:<18} {slow_ms:>8.1f}ms {fast_ms:>8.1f}ms {slow_ms / fast_ms:>7.1f}x")
        else:
            print(f"{name:<20} {shape:<18} {slow_ms:>8.1f}ms {'n/a':>10} {'':>8}")


def bench_network(repeats):
    from leafcnn.layers import softmax_cross_entropy
    from leafcnn.model import backward, build_network, forward, logits_from_cache
    from leafcnn.tensor import SeededRng

    net = build_network(SeededRng(0))
    x = SeededRng(1).uniform((1, 256, 256, 3), 0.0, 1.0)
    labels = np.array([0])

    def step():
        probs, cache = forward(net, x, mode="train", rng=SeededRng(2))
        result = softmax_cross_entropy(logits_from_cache(net, cache), labels)
        backward(net, cache, result.grad_logits)

    seconds = best_of(step, repeats)
    print(f"\nfull network forward+backward, one 256x256x3 input, "
          f"{BACKEND} backend: {seconds:.2f}s")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--batch", type=int, default=8)
    args = parser.parse_args()
    print(f"active backend: {BACKEND}")
    bench_kernels(args.batch, args.repeats)
    bench_network(max(2, args.repeats // 2))


if __name__ == "__main__":
    main()
