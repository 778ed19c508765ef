"""``mtrng`` command-line interface.

Exit codes: 0 success, 1 domain failure (test failed, authentication
failed, entropy exhausted), 2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import analysis, chain, crypto, dp, nist, nlfsr, pipeline, pnm, sim
from .bits import BitFileError, BitStream, read_bits, read_meta, sha256_file, write_bits
from .config import ConfigError, RunConfig, load_file

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

CHARSETS = {"alnum": crypto.ALPHANUMERIC, "digits": crypto.DIGITS, "hex": "0123456789abcdef"}

log = logging.getLogger("mtrng")


class UsageError(Exception):
    pass


class DomainFailure(Exception):
    pass


# --- small I/O helpers ---------------------------------------------------

def _dump_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _write_series(path: Path, fmt: str, dt: float, values: np.ndarray, column: str, writer) -> Path:
    """Time series as CSV (via ``writer``) or JSON."""
    if fmt == "json":
        path = path.with_suffix(".json")
        t = dt * np.arange(1, len(values) + 1)
        _dump_json(path, {"dt": dt, "t_s": t.tolist(), column: np.asarray(values).tolist()})
    else:
        path = path.with_suffix(".csv")
        writer(path)
    return path


def _read_trace(path: Path) -> sim.CurrentTrace:
    if path.suffix == ".json":
        try:
            doc = json.loads(path.read_text())
            return sim.CurrentTrace(float(doc["dt"]), np.asarray(doc["i_A"], dtype=float))
        except (KeyError, TypeError, ValueError) as e:
            raise UsageError(f"{path}: not a current-trace JSON file ({e})") from None
    try:
        return sim.read_trace_csv(path)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _sniff(path: Path) -> str:
    if path.suffix == ".json":
        try:
            doc = json.loads(path.read_text())
        except ValueError:
            return "bits"
        return "trace" if isinstance(doc, dict) and "i_A" in doc else "charge" if isinstance(doc, dict) and "q_C" in doc else "bits"
    try:
        with open(path, encoding="ascii") as f:
            first = f.readline().strip()
    except (UnicodeDecodeError, ValueError):
        return "bits"
    return {"t_s,i_A": "trace", "t_s,q_C": "charge"}.get(first, "bits")


def _read_charge(path: Path) -> sim.ChargeTrace:
    if path.suffix == ".json":
        try:
            doc = json.loads(path.read_text())
            return sim.ChargeTrace(float(doc["dt"]), np.asarray(doc["q_C"], dtype=float))
        except (KeyError, TypeError, ValueError) as e:
            raise UsageError(f"{path}: not a charge JSON file ({e})") from None
    try:
        return sim.read_charge_csv(path)
    except ValueError as e:
        raise UsageError(str(e)) from None


def _read_bits(path: Path) -> BitStream:
    try:
        return read_bits(path)
    except (BitFileError, ValueError) as e:
        raise UsageError(str(e)) from None


def _pool(path: Path, offset: int, run: "Run") -> crypto.EntropyPool:
    bits = _read_bits(path)
    if not 0 <= offset <= bits.n_bits:
        raise UsageError(f"--offset {offset} outside the {bits.n_bits}-bit pool {path}")
    run.input(path)
    pool = crypto.EntropyPool(bits[offset:])
    run.pool = (str(path), offset, pool)
    return pool


class Run:
    """Collects what the manifest records for one command."""

    def __init__(self, command: str, cfg: RunConfig, out: Path, args: dict):
        self.command, self.cfg, self.out, self.args = command, cfg, out, args
        self.inputs: dict[str, str] = {}
        self.outputs: dict[str, str] = {}
        self.summary: dict = {}
        self.pool = None
        self.timing: dict[str, float] = {}  # wall-clock only; excluded from reproducibility
        self.started = time.time()

    def input(self, path: Path) -> None:
        self.inputs[str(path)] = sha256_file(path)

    def output(self, path: Path) -> Path:
        self.outputs[path.name] = sha256_file(path)
        return path

    def write_manifest(self, status: str) -> Path:
        doc = {
            "command": self.command,
            "version": __version__,
            "config": self.cfg.as_dict(),
            "args": self.args,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "summary": self.summary,
            "status": status,
            "wall_clock": {"started_unix": self.started, "elapsed_s": time.time() - self.started, **self.timing},
        }
        if self.pool is not None:
            src, offset, pool = self.pool
            doc["pool"] = {"source": src, "offset": offset, "consumed": pool.consumed, "next_offset": offset + pool.consumed}
        path = self.out / f"{self.command}.manifest.json"
        _dump_json(path, doc)
        return path


# --- commands ------------------------------------------------------------

def cmd_simulate(a, cfg: RunConfig, run: Run) -> int:
    params = cfg.sim_params()
    trace = sim.simulate(params)
    path = _write_series(run.out / "trace", a.format, trace.dt, trace.samples, "i_A", lambda p: sim.write_trace_csv(p, trace))
    run.output(path)
    mean_i = float(np.mean(trace.samples)) if len(trace.samples) else float("nan")
    run.summary = {"n_samples": len(trace.samples), "mean_current_A": mean_i, "mean_power_W": mean_i * params.bias_V}
    print(f"simulate: {len(trace.samples)} samples -> {path}, mean current {mean_i * 1e6:.4g} uA, "
          f"power {mean_i * params.bias_V * 1e6:.4g} uW")
    return EXIT_OK


def cmd_extract(a, cfg: RunConfig, run: Run) -> int:
    trace = _read_trace(a.trace)
    run.input(a.trace)
    ccfg = cfg.chain_config()
    port1, port2, _ = chain.run_chain(trace, ccfg)
    theta = chain.calibrate_threshold(port2, ccfg)
    bits = chain.comparator(port2, ccfg, theta)
    for name, port in (("port1", port1), ("port2", port2)):
        p = _write_series(run.out / name, a.format, port.dt, port.samples, "v_V", lambda p, port=port: chain.write_voltage_csv(p, port))
        run.output(p)
    bpath = run.out / ("port3.txt" if a.ascii else "port3.bits")
    meta = write_bits(bpath, bits, ascii=a.ascii, source_sha256=run.inputs[str(a.trace)])
    run.output(bpath)
    run.output(meta)
    ones = analysis.bit_balance(bits).ones_fraction if bits.n_bits else float("nan")
    run.summary = {"n_samples": len(trace.samples), "n_bits": bits.n_bits, "theta_V": theta, "ones_fraction": ones}
    print(f"extract: {len(trace.samples)} samples -> {bits.n_bits} bits ({bpath}), theta {theta:.4g} V, ones {ones:.4f}")
    return EXIT_OK


def cmd_analyze(a, cfg: RunConfig, run: Run) -> int:
    kind = _sniff(a.input) if a.kind == "auto" else a.kind
    run.input(a.input)
    parts = []
    if kind == "bits":
        bal = analysis.bit_balance(_read_bits(a.input))
        doc = {"ones_fraction": bal.ones_fraction, "zeros_fraction": bal.zeros_fraction, "n_bits": bal.n_bits}
        path = run.out / "balance.json"
        _dump_json(path, doc)
        run.output(path)
        run.summary = doc
        print(f"analyze: {bal.n_bits} bits, ones {bal.ones_fraction:.4f} / zeros {bal.zeros_fraction:.4f}")
        return EXIT_OK
    if kind == "trace":
        trace = _read_trace(a.input)
        slopes = analysis.slope_series(trace.samples, trace.dt)
        hist = analysis.histogram(slopes.values)
        fit = analysis.gaussian_fit(hist)
        hpath = run.out / "slope_histogram.json"
        analysis.write_histogram_json(hpath, hist, fit)
        run.output(hpath)
        run.summary.update(slope_bins=len(hist.counts), slope_mu=fit.mu, slope_sigma=fit.sigma, slope_r_squared=fit.r_squared)
        parts.append(f"slope fit r2 {fit.r_squared:.4f} over {len(hist.counts)} bins")
        charge = sim.integrate_charge(trace, cfg.charge_window())
    else:
        charge = _read_charge(a.input)
    grid = analysis.time_lag(charge, cfg["tl.grid_size"], cfg["tl.alpha"])
    band = cfg["tl.band_fraction"] * float(np.ptp(charge.values))
    frac = analysis.diagonal_fraction(grid, band, cfg["tl.level"])
    if a.format == "json":
        gpath = run.out / "tl_grid.json"
        _dump_json(gpath, {"x_edges": grid.x_edges.tolist(), "y_edges": grid.y_edges.tolist(), "values": grid.values.tolist(),
                           "alpha": grid.alpha, "k_norm": grid.k_norm})
    else:
        gpath = run.out / "tl_grid.csv"
        run.output(analysis.write_tl_grid(gpath, grid))
    run.output(gpath)
    run.summary.update(n_charge=len(charge.values), tl_alpha=grid.alpha, tl_max=float(grid.values.max()), tl_diagonal_fraction=frac)
    parts.append(f"TL diagonal fraction {frac:.3f} ({len(charge.values)} charge values)")
    print("analyze: " + ", ".join(parts))
    return EXIT_OK


def cmd_nist(a, cfg: RunConfig, run: Run) -> int:
    bits = _read_bits(a.bits)
    run.input(a.bits)
    if a.max_bits is not None:
        bits = bits[: a.max_bits]
    if bits.n_bits == 0:
        raise UsageError(f"{a.bits}: empty bit stream")
    report = nist.run_suite(bits, cfg.test_params())
    jpath, tpath = run.out / "nist_report.json", run.out / "nist_report.txt"
    jpath.write_text(report.to_json() + "\n")
    tpath.write_text(report.to_table() + "\n")
    run.output(jpath)
    run.output(tpath)
    run.summary = {"n_bits": bits.n_bits, "all_passed": report.all_passed,
                   "failed": [e.test_name for e in report.entries if e.applicable and not e.passed]}
    print(report.to_table())
    verdict = "all applicable tests passed" if report.all_passed else f"FAILED: {', '.join(run.summary['failed'])}"
    print(f"nist: {bits.n_bits} bits, {verdict}")
    return EXIT_OK if report.all_passed else EXIT_FAIL


def cmd_expand(a, cfg: RunConfig, run: Run) -> int:
    spec = cfg.nlfsr_spec()
    interval = cfg["nlfsr.reseed_interval"]
    n_out = cfg["nlfsr.n_out"] if a.n_out is None else a.n_out
    t0 = time.perf_counter()
    if a.seed_bits is None:
        ccfg = cfg.chain_config()
        n_seed = pipeline.seed_demand(n_out, spec, interval)
        seed_bits, source = pipeline.raw_bits(cfg.sim_params(), ccfg, n_seed), "pipeline"
        spath = run.out / "seed.bits"
        run.output(write_bits(spath, seed_bits))
        run.output(spath)
        run.summary["sim_steps"] = n_seed * ccfg.sample_decimation
    else:
        seed_bits, source = _read_bits(a.seed_bits), str(a.seed_bits)
        run.input(a.seed_bits)
    t1 = time.perf_counter()
    out = nlfsr.expand(seed_bits, spec, interval, n_out)
    elapsed = time.perf_counter() - t1
    total = time.perf_counter() - t0
    opath = run.out / ("expanded.txt" if a.ascii else "expanded.bits")
    meta = write_bits(opath, out, ascii=a.ascii, source_sha256=seed_bits.sha256(), extra={"nlfsr_spec": spec.to_line(), "reseed_interval": interval})
    run.output(opath)
    run.output(meta)
    rate = n_out / elapsed / 1e6 if elapsed > 0 else float("inf")
    ones = analysis.bit_balance(out).ones_fraction if n_out else float("nan")
    run.summary.update(n_out=n_out, seed_bits_used=pipeline.seed_demand(n_out, spec, interval), seed_source=source,
                       nlfsr_spec=spec.to_line(), ones_fraction=ones)
    run.timing = {"expand_s": elapsed, "total_s": total, "mbit_per_s": rate}
    print(f"expand: {n_out} bits -> {opath} in {elapsed:.3f} s ({rate:.2f} Mbit/s), ones {ones:.4f}")
    return EXIT_OK


def cmd_bitmap(a, cfg: RunConfig, run: Run) -> int:
    bits = _read_bits(a.bits)
    run.input(a.bits)
    if not 0 <= a.offset <= bits.n_bits:
        raise UsageError(f"--offset {a.offset} outside the {bits.n_bits}-bit stream")
    try:
        img = nlfsr.bitmap(bits[a.offset :], a.side)
    except ValueError as e:
        raise DomainFailure(f"{e} (generate more with: mtrng expand --n-out {a.offset + a.side * a.side})") from None
    spec_line = read_meta(a.bits).get("nlfsr_spec", "unknown")
    comment = f"mtrng bitmap spec={spec_line} seed_sha256={read_meta(a.bits).get('source_sha256', '') or 'unknown'} bits_sha256={bits.sha256()}"
    path = run.out / "bitmap.pbm"
    pnm.write_pbm(path, img, comment)
    run.output(path)
    ones = float(img.mean())
    run.summary = {"side": a.side, "ones_fraction": ones}
    print(f"bitmap: {a.side}x{a.side} -> {path}, ones {ones:.4f}")
    return EXIT_OK


def cmd_otp(a, cfg: RunConfig, run: Run) -> int:
    charset = a.symbols if a.symbols is not None else CHARSETS[a.charset]
    pool = _pool(a.bits, a.offset, run)
    try:
        words = [crypto.otp(pool, a.length, charset) for _ in range(a.count)]
    except ValueError as e:
        raise UsageError(str(e)) from None
    path = run.out / "otp.txt"
    path.write_text("".join(w + "\n" for w in words))
    run.output(path)
    run.summary = {"count": a.count, "length": a.length, "charset_size": len(charset), "bits_consumed": pool.consumed}
    for w in words:
        print(w)
    print(f"otp: {a.count} x {a.length} symbols from {len(charset)}-symbol set, {pool.consumed} pool bits", file=sys.stderr)
    return EXIT_OK


def cmd_encrypt(a, cfg: RunConfig, run: Run) -> int:
    data = a.input.read_bytes()
    run.input(a.input)
    pool = _pool(a.bits, a.offset, run)
    keys = None
    if a.key is not None:
        run.input(a.key)
        try:
            keys = crypto.KeyMaterial.from_bytes(a.key.read_bytes())
        except ValueError as e:
            raise UsageError(str(e)) from None
    env, keys = crypto.encrypt(data, pool, keys)
    epath = run.out / (a.input.name + ".mtrng")
    epath.write_bytes(env.to_bytes())
    run.output(epath)
    if a.key is None:
        kpath = run.out / (a.input.name + ".key")
        kpath.write_bytes(keys.to_bytes())
        kpath.chmod(0o600)
        run.output(kpath)
    run.summary = {"plaintext_bytes": len(data), "envelope_bytes": len(env.to_bytes()), "bits_consumed": pool.consumed}
    print(f"encrypt: {len(data)} bytes -> {epath} ({pool.consumed} pool bits)")
    return EXIT_OK


def cmd_decrypt(a, cfg: RunConfig, run: Run) -> int:
    raw = a.envelope.read_bytes()
    run.input(a.envelope)
    run.input(a.key)
    try:
        keys = crypto.KeyMaterial.from_bytes(a.key.read_bytes())
    except ValueError as e:
        raise UsageError(str(e)) from None
    plain = crypto.decrypt(raw, keys)
    name = a.envelope.name[: -len(".mtrng")] if a.envelope.name.endswith(".mtrng") else a.envelope.name
    opath = a.output if a.output is not None else run.out / (name + ".dec")
    opath.write_bytes(plain)
    run.output(opath)
    digest = sha256_file(opath)
    run.summary = {"plaintext_bytes": len(plain), "sha256": digest}
    print(f"decrypt: {len(plain)} bytes -> {opath} sha256 {digest}")
    return EXIT_OK


def cmd_perturb(a, cfg: RunConfig, run: Run) -> int:
    try:
        img = pnm.read_pnm(a.image)
    except OSError as e:
        raise UsageError(str(e)) from None
    run.input(a.image)
    pcfg = cfg.perturb_config()
    pool = _pool(a.bits, a.offset, run)
    unit = dp.to_unit(img.pixels, img.maxval)
    noisy = dp.dp_perturb(unit, pcfg, pool)
    rep = dp.perturbation_report(unit, noisy)
    ext = {"P1": ".pbm", "P2": ".pgm", "P5": ".pgm", "P3": ".ppm", "P6": ".ppm"}[img.kind]
    path = run.out / ("perturbed" + ext)
    pnm.write_pnm(path, pnm.Image(dp.from_unit(noisy, img.maxval), img.maxval, img.kind))
    run.output(path)
    run.summary = {"pixels": int(unit.size), "epsilon": pcfg.epsilon, "mae": rep.mae,
                   "psnr_db": rep.psnr if np.isfinite(rep.psnr) else "inf", "bits_consumed": pool.consumed}
    print(f"perturb: {unit.size} values, epsilon {pcfg.epsilon:g} -> {path}, MAE {rep.mae:.4g}, PSNR {rep.psnr:.2f} dB")
    return EXIT_OK


# --- parser --------------------------------------------------------------

def _nonneg(text: str) -> int:
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("global options")
    g.add_argument("--config", type=Path, help="key=value file, or a run manifest (.json) to replay")
    g.add_argument("--seed", type=int, help="simulation seed (same as -D sim.seed=N)")
    g.add_argument("--out", type=Path, default=Path("."), help="output directory (default: current)")
    g.add_argument("--format", choices=("csv", "json"), default="csv", help="format for traces and grids")
    g.add_argument("-D", "--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")

    p = argparse.ArgumentParser(prog="mtrng", description="Dipole-noise TRNG simulator, extractor, tests and applications.")
    p.add_argument("--version", action="version", version=f"mtrng {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def add(name, help_):
        return sub.add_parser(name, parents=[common], help=help_, description=help_)

    add("simulate", "simulate a current trace")
    s = add("extract", "run a trace through the I/V, high-pass and comparator stages")
    s.add_argument("trace", type=Path)
    s.add_argument("--ascii", action="store_true", help="write bits as 0/1 text")
    s = add("analyze", "slope statistics, time-lag map or bit balance")
    s.add_argument("input", type=Path)
    s.add_argument("--kind", choices=("auto", "trace", "charge", "bits"), default="auto")
    s = add("nist", "run the statistical test battery")
    s.add_argument("bits", type=Path)
    s.add_argument("--max-bits", type=_positive)
    s = add("expand", "expand seed bits with the NLFSR (simulates seeds if none given)")
    s.add_argument("seed_bits", type=Path, nargs="?")
    s.add_argument("--n-out", type=_nonneg, help="output bits (default: nlfsr.n_out)")
    s.add_argument("--ascii", action="store_true")
    s = add("bitmap", "render bits as a square plain PBM image")
    s.add_argument("bits", type=Path)
    s.add_argument("--side", type=_positive, default=1024)
    s.add_argument("--offset", type=_nonneg, default=0)
    s = add("otp", "one-time passwords from a bit pool")
    s.add_argument("bits", type=Path)
    s.add_argument("--length", type=_nonneg, default=12)
    s.add_argument("--count", type=_positive, default=1)
    s.add_argument("--charset", choices=sorted(CHARSETS), default="alnum")
    s.add_argument("--symbols", help="explicit symbol set (overrides --charset)")
    s.add_argument("--offset", type=_nonneg, default=0, help="first pool bit to use")
    s = add("encrypt", "AES-256-CTR + HMAC-SHA256 envelope keyed from a bit pool")
    s.add_argument("input", type=Path)
    s.add_argument("--bits", type=Path, required=True)
    s.add_argument("--key", type=Path, help="existing 64-byte key file (else keys come from the pool)")
    s.add_argument("--offset", type=_nonneg, default=0)
    s = add("decrypt", "verify and decrypt an envelope")
    s.add_argument("envelope", type=Path)
    s.add_argument("--key", type=Path, required=True)
    s.add_argument("--output", type=Path)
    s = add("perturb", "Laplace-noise an image (PGM/PPM/PBM)")
    s.add_argument("image", type=Path)
    s.add_argument("--bits", type=Path, required=True)
    s.add_argument("--offset", type=_nonneg, default=0)
    return p


COMMANDS = {
    "simulate": cmd_simulate, "extract": cmd_extract, "analyze": cmd_analyze, "nist": cmd_nist,
    "expand": cmd_expand, "bitmap": cmd_bitmap, "otp": cmd_otp, "encrypt": cmd_encrypt,
    "decrypt": cmd_decrypt, "perturb": cmd_perturb,
}


def _overrides(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        if "=" not in item:
            raise ConfigError(f"-D expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _arg_record(a) -> dict:
    skip = {"command", "config", "set", "out", "seed"}
    return {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(a).items()) if k not in skip}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="mtrng: warning: %(message)s")
    a = build_parser().parse_args(argv)

    def fail(code: int, msg: str) -> int:
        print(f"mtrng {a.command}: error: {msg}", file=sys.stderr)
        return code

    try:
        layers = [load_file(a.config)] if a.config is not None else []
        if a.seed is not None:
            layers.append({"sim.seed": a.seed})
        layers.append(_overrides(a.set))
        cfg = RunConfig(*layers)
        a.out.mkdir(parents=True, exist_ok=True)
    except ConfigError as e:
        return fail(EXIT_USAGE, str(e))
    except OSError as e:
        return fail(EXIT_USAGE, f"cannot create output directory: {e}")

    run = Run(a.command, cfg, a.out, _arg_record(a))
    try:
        code = COMMANDS[a.command](a, cfg, run)
    except (crypto.AuthenticationError, crypto.UnsupportedVersionError) as e:
        code = fail(EXIT_FAIL, str(e))
    except (crypto.PoolExhaustedError, nlfsr.SeedExhaustedError, DomainFailure) as e:
        code = fail(EXIT_FAIL, str(e))
    except (UsageError, ConfigError, BitFileError, pnm.PnmError, crypto.EnvelopeFormatError) as e:
        code = fail(EXIT_USAGE, str(e))
    except FileNotFoundError as e:
        code = fail(EXIT_USAGE, f"no such file: {e.filename}")
    except OSError as e:
        code = fail(EXIT_USAGE, str(e))
    except ValueError as e:
        code = fail(EXIT_FAIL, str(e))
    run.write_manifest("ok" if code == EXIT_OK else f"exit {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
