"""Compare the numba and numpy convolution backends on training-shaped work.

Runs every hot kernel (conv1d forward/backward, transposed conv
forward/backward) at desk-scale and full-scale tensor shapes, checks the two
backends agree exactly, and prints a table of per-call latency, GFLOP/s, and
the numba speedup.

    python3 benchmarks/bench_kernels.py [--repeats N] [--scale desk|full|both]
"""

import argparse
import statistics
import time

import numpy as np

from vewave.kernels import available_backends, get_impl

# (label, B, ci, co, length, kernel, dilation) for the residual stack and
# (label, B, ci, co, frames, kernel, stride) for the mel upsampler.
CASES = {
    "desk": [
        ("conv L4096 32->64 d1", "conv", 1, 32, 64, 4096, 3, 1),
        ("conv L4096 32->64 d8", "conv", 1, 32, 64, 4096, 3, 8),
        ("upsample 80ch s16", "convt", 1, 80, 80, 64, 32, 16),
    ],
    "full": [
        ("conv L16384 64->128 d1", "conv", 1, 64, 128, 16384, 3, 1),
        ("conv L16384 64->128 d512", "conv", 1, 64, 128, 16384, 3, 512),
        ("upsample 80ch s16 L256", "convt", 1, 80, 80, 256, 32, 16),
    ],
}


def conv_work(impl, x, w, dilation):
    y = impl.conv1d_forward(x, w, dilation)
    gx = impl.conv1d_backward_input(y, w, dilation, x.shape[2])
    gw = impl.conv1d_backward_weight(x, y, dilation, w.shape[2])
    return y, gx, gw


def convt_work(impl, x, w, stride):
    y = impl.conv_transpose1d_forward(x, w, stride)
    gx = impl.conv_transpose1d_backward_input(y, w, stride)
    gw = impl.conv_transpose1d_backward_weight(x, y, stride, w.shape[2])
    return y, gx, gw


def flops(kind, b, ci, co, length, kernel, param):
    if kind == "conv":
        l_out = length - param * (kernel - 1)
        per_pass = 2.0 * b * co * ci * kernel * l_out
    else:
        per_pass = 2.0 * b * ci * co * kernel * length
    return 3.0 * per_pass  # forward + both backward passes


def time_case(impl, kind, b, ci, co, length, kernel, param, repeats):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((b, ci, length))
    shape = (co, ci, kernel) if kind == "conv" else (ci, co, kernel)
    w = rng.standard_normal(shape)
    work = conv_work if kind == "conv" else convt_work
    work(impl, x, w, param)  # warmup (JIT compilation for numba)
    samples = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = work(impl, x, w, param)
        samples.append(time.perf_counter() - t0)
    return statistics.median(samples), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--scale", choices=("desk", "full", "both"), default="both")
    args = ap.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    if "numba" not in backends:
        print("numba unavailable; timing the numpy backend only")

    scales = ("desk", "full") if args.scale == "both" else (args.scale,)
    header = f"{'case':<28}{'backend':<9}{'ms/call':>10}{'GFLOP/s':>10}{'speedup':>9}"
    for scale in scales:
        print(f"\n-- {scale} scale --")
        print(header)
        for label, kind, b, ci, co, length, kernel, param in CASES[scale]:
            gf = flops(kind, b, ci, co, length, kernel, param) / 1e9
            base_ms = None
            outputs = {}
            for name in ("numpy", "numba"):
                if name not in backends:
                    continue
                sec, out = time_case(get_impl(name), kind, b, ci, co, length,
                                     kernel, param, args.repeats)
                outputs[name] = out
                ms = sec * 1e3
                if name == "numpy":
                    base_ms = ms
                    speed = ""
                else:
                    speed = f"{base_ms / ms:7.2f}x"
                print(f"{label:<28}{name:<9}{ms:>10.3f}{gf / sec:>10.2f}{speed:>9}")
            if len(outputs) == 2:
                for a, b_ in zip(outputs["numpy"], outputs["numba"]):
                    assert np.array_equal(a, b_), f"backend mismatch on {label}"


if __name__ == "__main__":
    main()
