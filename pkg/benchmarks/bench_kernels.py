#!/usr/bin/env python3
"""Benchmark the decode-step kernel backends (numpy reference vs compiled).

Measures full-sequence forward+backward per sample at a few model sizes.
Run: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

import newscap.model.kernels as kernels
from newscap.model import decoder
from newscap.model.kernels import available_backends
from newscap.model.params import ModelDims, init_params

CASES = {
    "toy (gradient-check dims)": ModelDims(
        vocab=20, d_e=8, d_img=5, d_w=6, hidden=16, regions=4, sentences=3, d_att=4
    ),
    "desk (bundled pipeline dims)": ModelDims(
        vocab=60, d_e=48, d_img=8, d_w=24, hidden=128, regions=4, sentences=55, d_att=24
    ),
    "large (paper-like, reduced vocab)": ModelDims(
        vocab=2000, d_e=300, d_img=256, d_w=300, hidden=512, regions=49, sentences=55, d_att=128
    ),
}


def bench_case(dims: ModelDims, seq_len: int, repeat: int) -> dict[str, float]:
    params = init_params(dims, seed=0)
    rng = np.random.Generator(np.random.PCG64(1))
    grid = rng.uniform(-1, 1, (dims.regions, dims.d_img))
    a_f = rng.uniform(-1, 1, (dims.sentences, dims.d_w))
    ids = [1] + list(rng.integers(4, dims.vocab, size=seq_len)) + [2]

    out = {}
    for name, mod in available_backends().items():
        kernels.step_forward = mod.step_forward
        kernels.step_backward = mod.step_backward
        # Warmup, then measure.
        loss, cache = decoder.forward_loss(ids, grid, a_f, params)
        decoder.backward(cache, params)
        t0 = time.perf_counter()
        for _ in range(repeat):
            _, cache = decoder.forward_loss(ids, grid, a_f, params)
            decoder.backward(cache, params)
        out[name] = (time.perf_counter() - t0) / repeat * 1000.0
    return out


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=20)
    parser.add_argument("--seq-len", type=int, default=10)
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}")
    if "compiled" not in backends:
        print("note: compiled kernels not built; run `python setup.py build_ext --inplace`")
    for label, dims in CASES.items():
        times = bench_case(dims, args.seq_len, args.repeat)
        line = f"{label:36s} " + "  ".join(
            f"{name}: {ms:8.3f} ms/sample" for name, ms in times.items()
        )
        if len(times) == 2:
            line += f"  speedup: {times['python'] / times['compiled']:.1f}x"
        print(line)


if __name__ == "__main__":
    main()
