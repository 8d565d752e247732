"""Run one demo config and print the summary as a small text table.

    python3 demos/run_config.py demos/configs/alpha_sweep.json /tmp/alpha
"""
import sys

from fastdiva.harness import load_spec, resolve_threads, run_experiment


def main(config, out):
    spec = load_spec(config)
    summary = run_experiment(spec, out, threads=resolve_threads())
    head = f"{spec.sweep:>10}" + "".join(f"{lab:>20}" for lab in summary["algorithms"])
    print(head)
    for i, v in enumerate(spec.values):
        cells = []
        for per in summary["algorithms"].values():
            tm = per["trimmed_mean"][i]
            cells.append(f"{'n/a' if tm is None else f'{tm:.2f} dB':>20}")
        print(f"{v:>10g}" + "".join(cells))
    if spec.records_traces:
        print("\nmedian ISR per iteration (dB)")
        for label, per in summary["algorithms"].items():
            tr = per["trace"][0]
            curve = " ".join(f"{m:.1f}" for m in tr["median"][:12])
            print(f"{label:>14}: {curve}")


if __name__ == "__main__":
    main(*sys.argv[1:3])
