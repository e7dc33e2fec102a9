"""Compare the compiled and numpy kernel backends on the default problem.

    python benchmarks/bench_kernels.py [--samples 450] [--epochs 1000] [--repeat 5]
"""

import argparse
import statistics
import time

import numpy as np

from xconflict import kernels
from xconflict.model import generate_dataset, load_scenario
from xconflict.sage import init_model
from xconflict.temporal import build_temporal_graph


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times), statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=450)
    ap.add_argument("--epochs", type=int, default=1000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    x = build_temporal_graph(generate_dataset(load_scenario("default"), args.samples, 0)).features
    model = init_model(seed=0)
    acts = model.activation_codes
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the numpy backend is available")

    cases = {
        "forward": lambda b: b.forward(x, list(model.weights), acts),
        "loss+grads": lambda b: b.loss_and_grads(x, list(model.weights), acts),
        f"train {args.epochs} epochs": lambda b: b.train_adam(
            x, [W.copy() for W in model.weights], acts, args.epochs, 1e-3, 0.9, 0.999, 1e-8, [args.epochs]
        ),
    }
    print(f"T={args.samples}, dims={model.layer_dims}, best/median of {args.repeat}")
    print(f"{'kernel':<22}" + "".join(f"{name:>23}" for name in backends) + f"{'speedup':>10}")
    results = {}
    for case, fn in cases.items():
        row = {}
        for name, b in backends.items():
            fn(b)  # warm-up
            row[name] = best_of(lambda: fn(b), args.repeat)
        results[case] = row
        cells = "".join(f"{row[n][0] * 1e3:>12.3f} / {row[n][1] * 1e3:>6.2f}ms" for n in backends)
        speed = f"{row['python'][0] / row['compiled'][0]:>9.2f}x" if "compiled" in row else ""
        print(f"{case:<22}{cells}{speed}")

    if "compiled" in backends:
        a = backends["python"].train_adam(x, [W.copy() for W in model.weights], acts, 200, 1e-3, 0.9, 0.999, 1e-8, [200])
        c = backends["compiled"].train_adam(x, [W.copy() for W in model.weights], acts, 200, 1e-3, 0.9, 0.999, 1e-8, [200])
        drift = max(np.abs(u - v).max() for u, v in zip(a[1], c[1]))
        print(f"max weight difference after 200 epochs: {drift:.2e}")


if __name__ == "__main__":
    main()
