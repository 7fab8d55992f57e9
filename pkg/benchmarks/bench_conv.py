"""Compare the compiled convolution core with the numpy fallback.

    python benchmarks/bench_conv.py [--repeat 5] [--batch 32]

Times forward and backward on the layer shapes of the 128px toy network and
checks that both paths give bitwise-identical forward outputs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from kneedet import _conv_py
from kneedet.configs import toy_cfg
from kneedet.model import parse_cfg


def best_of(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--size", type=int, default=128)
    args = ap.parse_args()

    try:
        from kneedet import _conv_ext as ext
    except ImportError:
        raise SystemExit("compiled core not built; run `pip install -e . --no-build-isolation`") from None
    cfg = parse_cfg(toy_cfg(args.size))
    rng = np.random.default_rng(0)
    rows = []
    totals = {"ext": [0.0, 0.0], "py": [0.0, 0.0]}
    for i, layer in enumerate(cfg.layers):
        if layer.kind != "convolutional":
            continue
        c, h, w = cfg.shapes[i - 1] if i else (cfg.channels, cfg.height, cfg.width)
        x = rng.normal(size=(args.batch, c, h, w))
        wt = rng.normal(size=(layer.filters, c, layer.size, layer.size))
        b = rng.normal(size=layer.filters)
        s, p = layer.stride, layer.padding
        out = ext.conv2d_forward(x, wt, b, s, p)
        if not np.array_equal(out, _conv_py.conv2d_forward(x, wt, b, s, p)):
            raise SystemExit(f"layer {i}: compiled and fallback forward outputs differ")
        g = rng.normal(size=out.shape)
        t = {
            "ext": (best_of(lambda: ext.conv2d_forward(x, wt, b, s, p), args.repeat),
                    best_of(lambda: ext.conv2d_backward(x, wt, g, s, p, True), args.repeat)),
            "py": (best_of(lambda: _conv_py.conv2d_forward(x, wt, b, s, p), args.repeat),
                   best_of(lambda: _conv_py.conv2d_backward(x, wt, g, s, p, True), args.repeat)),
        }
        for k in totals:
            totals[k][0] += t[k][0]
            totals[k][1] += t[k][1]
        rows.append((f"{i}: {c}x{h}x{w} -> {layer.filters} k{layer.size} s{s}", *t["ext"], *t["py"]))

    print(f"batch {args.batch}, best of {args.repeat}, times in ms")
    print(f"{'layer':<32}{'fwd ext':>10}{'fwd py':>10}{'bwd ext':>10}{'bwd py':>10}")
    for name, fe, be, fp, bp in rows:
        print(f"{name:<32}{fe * 1e3:>10.2f}{fp * 1e3:>10.2f}{be * 1e3:>10.2f}{bp * 1e3:>10.2f}")
    fe, be = totals["ext"]
    fp, bp = totals["py"]
    print(f"{'total':<32}{fe * 1e3:>10.2f}{fp * 1e3:>10.2f}{be * 1e3:>10.2f}{bp * 1e3:>10.2f}")
    print(f"speedup: forward {fp / fe:.2f}x, backward {bp / be:.2f}x")


if __name__ == "__main__":
    main()
