"""End-to-end checks of the avglemma command-line tool."""

import argparse
import json
import os
import pathlib
import shutil
import subprocess
import sys


def run(binary, command, config, out, threads=None, env=None):
    args = [binary, command, "--config", str(config), "--out", str(out)]
    if threads is not None:
        args += ["--threads", str(threads)]
    return subprocess.run(args, capture_output=True, text=True, env=env)


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--binary", required=True)
    p.add_argument("--configs", required=True, type=pathlib.Path)
    p.add_argument("--work", required=True, type=pathlib.Path)
    a = p.parse_args()
    shutil.rmtree(a.work, ignore_errors=True)
    a.work.mkdir(parents=True)
    failures = []

    def expect(ok, what):
        print(("ok   " if ok else "FAIL ") + what)
        if not ok:
            failures.append(what)

    configs = sorted(a.configs.glob("*.json"))
    expect(len(configs) > 0, "configs present")
    for cfg in configs:
        command = json.loads(cfg.read_text())["command"]
        out = a.work / cfg.stem
        r = run(a.binary, command, cfg, out)
        expect(r.returncode == 0, f"{cfg.name} exits 0 (got {r.returncode}: {r.stderr.strip()})")
        report = out / "report.json"
        expect(report.exists(), f"{cfg.name} writes report.json")
        if report.exists():
            body = json.loads(report.read_text())
            expect(body.get("command") == command and body.get("pass") is True,
                   f"{cfg.name} report passes")
            for name in body.get("artifacts", []):
                expect((out / name).exists(), f"{cfg.name} artifact {name}")
        expect((out / "timing.json").exists(), f"{cfg.name} writes timing.json")

    # Malformed config: missing field/N.
    bad = a.work / "missing_n.json"
    bad.write_text(json.dumps({"field": {"M": 1}}))
    r = run(a.binary, "compare-exponents", bad, a.work / "bad")
    expect(r.returncode == 2, f"missing N exits 2 (got {r.returncode})")
    expect("/field/N" in r.stderr, "error names /field/N")

    bad.write_text("{not json")
    r = run(a.binary, "decay", bad, a.work / "bad")
    expect(r.returncode == 2, f"malformed JSON exits 2 (got {r.returncode})")

    # A failing check exits 1.
    fail = a.work / "fail.json"
    fail.write_text(json.dumps({"field": {"N": 2}, "expect": {"gamma": 2},
                                "sweep": {"sphere_points": 256}}))
    r = run(a.binary, "gamma-opt", fail, a.work / "fail")
    expect(r.returncode == 1, f"failed expectation exits 1 (got {r.returncode})")

    # Thread count does not change the report.
    replay = a.configs / "averaging_gain_small.json"
    reports = []
    for i, (threads, env_threads) in enumerate([(1, None), (2, None), (None, "3")]):
        env = dict(os.environ)
        env.pop("AVGLEMMA_THREADS", None)
        if env_threads:
            env["AVGLEMMA_THREADS"] = env_threads
        out = a.work / f"replay{i}"
        r = run(a.binary, "averaging-gain", replay, out, threads=threads, env=env)
        expect(r.returncode == 0, f"replay {i} exits 0")
        reports.append((out / "report.json").read_bytes() if r.returncode == 0 else b"")
        if env_threads and r.returncode == 0:
            timing = json.loads((out / "timing.json").read_text())
            expect(timing["threads"] == 3, "AVGLEMMA_THREADS takes precedence")
    expect(len(set(reports)) == 1, "report.json identical across thread counts")

    decay = (a.work / "decay_quadratic" / "decay.csv").read_bytes()
    expect(decay.startswith(b"lambda,magnitude,bound,ratio\r\n"), "decay.csv header")

    print(f"{len(failures)} failure(s)")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
