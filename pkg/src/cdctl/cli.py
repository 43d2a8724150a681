"""Command-line pipeline: gen -> factor -> design -> analyze / simulate -> spectrum -> report.

Commands hand files off through a shared output directory.  Every JSON output
embeds the sha256 of the canonical run spec so results are traceable to their
configuration; seeds make all stages deterministic.

Exit codes: 0 success, 2 validation error, 3 numerical failure.  Errors are
emitted as a JSON object on stderr.  Set CDCTL_LOG to a level name (e.g.
DEBUG) for progress logging.
"""

import argparse
import hashlib
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, design as design_mod, numlin, sim, spectral
from .errors import CdctlError, NUMERICAL_ERRORS, VALIDATION_ERRORS
from .plant import ScalarTransferFunction, actuator_lag

log = logging.getLogger("cdctl")

TWO_PI = 2.0 * np.pi


class SpecError(CdctlError):
    """Run-spec file is malformed or inconsistent."""


# -- run spec -------------------------------------------------------------------

def _freq_rad_s(section, base, where):
    """Read `<base>_hz` or `<base>_rad_s` (exactly one) as rad/s."""
    hz_key, rad_key = f"{base}_hz", f"{base}_rad_s"
    has_hz, has_rad = hz_key in section, rad_key in section
    if has_hz == has_rad:
        raise SpecError(f"{where}: provide exactly one of {hz_key!r} or {rad_key!r}")
    return TWO_PI * float(section[hz_key]) if has_hz else float(section[rad_key])


def spec_hash(spec: dict) -> str:
    blob = json.dumps(spec, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load_runspec(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SpecError(f"spec file {path} does not exist")
    with open(path) as fh:
        try:
            spec = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}: invalid JSON ({exc})")
    for section in ("plant",):
        if section not in spec:
            raise SpecError(f"{path}: missing required section {section!r}")
    for name in ("delta_s_file", "delta_f_file"):
        ref = spec.get("uncertainty", {}).get(name)
        if ref is not None and not Path(ref).exists():
            raise SpecError(f"{path}: referenced file {ref} does not exist")
    return spec


def _plant_config(spec):
    p = spec["plant"]
    try:
        dims = {k: int(p[k]) for k in ("n_y", "n_s", "n_f")}
        cfg = {
            **dims,
            "target_kappa": float(p.get("target_kappa", 1000.0)),
            "seed": int(p.get("seed", 0)),
            "a_s": _freq_rad_s(p, "a_s", "plant"),
            "a_f": _freq_rad_s(p, "a_f", "plant"),
            "tau_d": float(p.get("tau_d_s", 900e-6)),
            "f_s": float(p.get("f_s_hz", 10000.0)),
        }
    except KeyError as exc:
        raise SpecError(f"plant section missing key {exc}")
    return cfg


def _design_config(spec):
    d = spec.get("design", {})
    return {
        "lambda_tiso": _freq_rad_s(d, "lambda_tiso", "design"),
        "lambda_siso": _freq_rad_s(d, "lambda_siso", "design"),
        "mu": float(d.get("mu", 1.0)),
        "w_mode": d.get("w_mode", "identity"),
        "w_weights": d.get("w_weights"),
        "use_input_comp": bool(d.get("use_input_comp", True)),
        "use_output_comp": bool(d.get("use_output_comp", True)),
    }


# -- output helpers ---------------------------------------------------------------

def _outdir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path, obj, sha):
    obj = dict(obj)
    obj["spec_sha256"] = sha
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
    log.debug("wrote %s", path)


def _read_json(path):
    if not Path(path).exists():
        raise SpecError(f"expected pipeline file {path}; run the upstream command first")
    with open(path) as fh:
        return json.load(fh)


def _matrix_paths(out, fmt):
    ext = "json" if fmt == "json" else "csv"
    return out / f"response_slow.{ext}", out / f"response_fast.{ext}"


def _write_matrix(path, A):
    if str(path).endswith(".json"):
        numlin.write_matrix_json(path, A)
    else:
        numlin.write_matrix_csv(path, A)


def _read_matrix(path):
    path = str(path)
    if path.endswith(".json"):
        return numlin.read_matrix_json(path)
    return numlin.read_matrix_csv(path)


# -- commands ---------------------------------------------------------------------

def cmd_gen(args):
    spec = load_runspec(args.spec)
    sha = spec_hash(spec)
    cfg = _plant_config(spec)
    out = _outdir(args)
    seed = args.seed if args.seed is not None else cfg["seed"]
    pair = sim.synth_response_pair(cfg["n_y"], cfg["n_s"], cfg["n_f"],
                                   cfg["target_kappa"], seed)
    p_slow, p_fast = _matrix_paths(out, args.format)
    _write_matrix(p_slow, pair.R_s)
    _write_matrix(p_fast, pair.R_f)
    kappa = numlin.condition_number(pair.stacked())
    _write_json(out / "gen_meta.json", {
        "files": [p_slow.name, p_fast.name],
        "dims": {"n_y": pair.n_y, "n_s": pair.n_s, "n_f": pair.n_f},
        "seed": seed,
        "target_kappa": cfg["target_kappa"],
        "kappa_stacked": kappa,
    }, sha)
    print(f"generated {p_slow.name}, {p_fast.name} (kappa = {kappa:.1f})")
    return 0


def _load_pair(args, out):
    if args.rs and args.rf:
        return numlin.ResponsePair(_read_matrix(args.rs), _read_matrix(args.rf))
    for fmt in ("csv", "json"):
        p_slow, p_fast = _matrix_paths(out, fmt)
        if p_slow.exists() and p_fast.exists():
            return numlin.ResponsePair(_read_matrix(p_slow), _read_matrix(p_fast))
    raise SpecError(f"no response matrices in {out}; run `cdctl gen` or pass --rs/--rf")


def cmd_factor(args):
    spec = load_runspec(args.spec) if args.spec else {}
    sha = spec_hash(spec)
    out = _outdir(args)
    pair = _load_pair(args, out)
    fact = numlin.gsvd(pair)
    R_s_hat, R_f_hat = fact.reconstruct()
    res_s = float(np.linalg.norm(pair.R_s - R_s_hat) / np.linalg.norm(pair.R_s))
    res_f = float(np.linalg.norm(pair.R_f - R_f_hat) / np.linalg.norm(pair.R_f))
    norm_err = float(np.abs(fact.sigma_s**2 + fact.sigma_f**2 - 1.0).max())
    orth = float(max(
        np.abs(fact.U_s.T @ fact.U_s - np.eye(fact.n_s)).max(),
        np.abs(fact.U_f.T @ fact.U_f - np.eye(fact.n_f)).max()))
    sv_x = np.linalg.svd(fact.X, compute_uv=False)
    sv_r = np.linalg.svd(pair.stacked(), compute_uv=False)
    lemma1 = float(np.abs(sv_x - sv_r).max() / sv_r[0])
    report = {
        "residual_slow": res_s,
        "residual_fast": res_f,
        "normalization_err": norm_err,
        "orthogonality_err": orth,
        "lemma1_rel_err": lemma1,
        "sigma_s": [float(v) for v in fact.sigma_s],
        "sigma_f": [float(v) for v in fact.sigma_f],
        "pass": bool(res_s <= 1e-10 and res_f <= 1e-10 and norm_err <= 1e-12
                     and orth <= 1e-12 and lemma1 <= 1e-9),
    }
    _write_json(out / "factorization.json", {
        "X": numlin.matrix_to_obj(fact.X),
        "sigma_s": [float(v) for v in fact.sigma_s],
        "sigma_f": [float(v) for v in fact.sigma_f],
        "U_s": numlin.matrix_to_obj(fact.U_s),
        "U_f": numlin.matrix_to_obj(fact.U_f),
    }, sha)
    _write_json(out / "factor_report.json", report, sha)
    status = "pass" if report["pass"] else "FAIL"
    print(f"factorization residuals {res_s:.2e}/{res_f:.2e}, "
          f"normalization {norm_err:.2e}, lemma1 {lemma1:.2e} [{status}]")
    return 0


def _load_factorization(out):
    obj = _read_json(out / "factorization.json")
    return numlin.GsvdFactorization(
        X=numlin.matrix_from_obj(obj["X"]),
        sigma_s=np.asarray(obj["sigma_s"], dtype=float),
        sigma_f=np.asarray(obj["sigma_f"], dtype=float),
        U_s=numlin.matrix_from_obj(obj["U_s"]),
        U_f=numlin.matrix_from_obj(obj["U_f"]),
    )


def _build_design(spec, fact):
    pcfg = _plant_config(spec)
    dcfg = _design_config(spec)
    filters = design_mod.midranging_filters(
        pcfg["a_s"], pcfg["a_f"], pcfg["tau_d"],
        dcfg["lambda_tiso"], dcfg["lambda_siso"])
    if dcfg["w_mode"] == "identity":
        W = None
    elif dcfg["w_mode"] == "modal":
        if dcfg["w_weights"] is None:
            raise SpecError("design.w_mode 'modal' requires design.w_weights")
        W = design_mod.modal_weighting(fact, dcfg["w_weights"])
    else:
        raise SpecError(f"unknown design.w_mode {dcfg['w_mode']!r}")
    return design_mod.compose_design(fact, filters, mu=dcfg["mu"], W=W), dcfg, pcfg


def cmd_design(args):
    spec = load_runspec(args.spec)
    sha = spec_hash(spec)
    out = _outdir(args)
    fact = _load_factorization(out)
    dsn, dcfg, _ = _build_design(spec, fact)
    obj = dsn.to_obj()
    obj["use_input_comp"] = dcfg["use_input_comp"]
    obj["use_output_comp"] = dcfg["use_output_comp"]
    _write_json(out / "design.json", obj, sha)
    print(f"design composed: mu={dsn.mu}, lambda_tiso={dsn.filters.lambda_tiso:.4g} rad/s, "
          f"lambda_siso={dsn.filters.lambda_siso:.4g} rad/s")
    return 0


def _load_design(out):
    obj = _read_json(out / "design.json")
    fobj = obj["filters"]
    filters = design_mod.MidrangingFilters(
        q_s=ScalarTransferFunction.from_obj(fobj["q_s"]),
        q_f=ScalarTransferFunction.from_obj(fobj["q_f"]),
        lambda_tiso=float(fobj["lambda_tiso"]),
        lambda_siso=float(fobj["lambda_siso"]),
        tau_d=float(fobj["tau_d"]),
    )
    fact = numlin.GsvdFactorization(
        X=numlin.matrix_from_obj(obj["X"]),
        sigma_s=np.asarray(obj["sigma_s"], dtype=float),
        sigma_f=np.asarray(obj["sigma_f"], dtype=float),
        U_s=numlin.matrix_from_obj(obj["U_s"]),
        U_f=numlin.matrix_from_obj(obj["U_f"]),
    )
    dsn = design_mod.TwoArrayDesign(
        factorization=fact, filters=filters, mu=float(obj["mu"]),
        W=numlin.matrix_from_obj(obj["W"]),
        Upsilon_f=numlin.matrix_from_obj(obj["Upsilon_f"]),
        Gamma=numlin.matrix_from_obj(obj["Gamma"]),
        X_mu_inv=numlin.matrix_from_obj(obj["X_mu_inv"]),
        K_s=numlin.matrix_from_obj(obj["K_s"]),
        K_f=numlin.matrix_from_obj(obj["K_f"]),
        K0_s=numlin.matrix_from_obj(obj["K0_s"]),
        K0_f=numlin.matrix_from_obj(obj["K0_f"]),
    )
    flags = (bool(obj.get("use_input_comp", True)), bool(obj.get("use_output_comp", True)))
    return dsn, flags


def _analysis_grid(spec):
    a = spec.get("analysis", {})
    return analysis.FrequencyGrid.logspace(
        f_min_hz=float(a.get("f_min_hz", 0.01)),
        f_max_hz=float(a.get("f_max_hz", 5000.0)),
        count=int(a.get("points", 2000)))


def cmd_analyze(args):
    spec = load_runspec(args.spec)
    sha = spec_hash(spec)
    out = _outdir(args)
    dsn, (use_ups, use_gam) = _load_design(out)
    pcfg = _plant_config(spec)
    grid = _analysis_grid(spec)
    g_s = actuator_lag(pcfg["a_s"], pcfg["tau_d"])
    g_f = actuator_lag(pcfg["a_f"], pcfg["tau_d"])
    adir = out / "analysis"
    adir.mkdir(exist_ok=True)

    tasks = {
        "sweep": lambda: analysis.output_sensitivity_sweep(
            dsn, grid, use_input_comp=use_ups, use_output_comp=use_gam),
        "input": lambda: analysis.input_sensitivity_sweep(dsn, grid),
        "open_loop": lambda: analysis.open_loop_and_margin(
            dsn, grid, use_output_comp=use_gam),
        "margin": lambda: analysis.robust_stability_margin(
            dsn, g_s, g_f, grid, use_output_comp=use_gam),
        "modal": lambda: analysis.modal_sensitivities(dsn.filters, g_s, g_f, grid),
    }
    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            futures = {k: pool.submit(fn) for k, fn in tasks.items()}
            results = {k: f.result() for k, f in futures.items()}
    else:
        results = {k: fn() for k, fn in tasks.items()}
    sweep, inp = results["sweep"], results["input"]
    ol, margin, modal = results["open_loop"], results["margin"], results["modal"]

    def db(x):
        return 20.0 * np.log10(np.maximum(np.asarray(x), 1e-300))

    with open(adir / "sensitivity_sweep.csv", "w") as fh:
        fh.write("freq_hz,smin_db,smax_db,s_tiso_db,s_siso_db,t_tiso_db,t_siso_db\n")
        for row in zip(grid.f_hz, db(sweep.sigma_min), db(sweep.sigma_max),
                       db(sweep.s_tiso_mag), db(sweep.s_siso_mag),
                       db(sweep.t_tiso_mag), db(sweep.t_siso_mag)):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(adir / "input_sweep.csv", "w") as fh:
        fh.write("freq_hz,su_slow_db,su_fast_db\n")
        for row in zip(grid.f_hz, db(inp.sigma_max_slow), db(inp.sigma_max_fast)):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    with open(adir / "open_loop.csv", "w") as fh:
        fh.write("freq_hz,det_l_logabs,det_l_arg,det_l0_logabs,det_l0_arg,margin_norm\n")
        for row in zip(grid.f_hz, ol.det_l_logabs, np.angle(ol.det_l_sign),
                       ol.det_l0_logabs, np.angle(ol.det_l0_sign), margin.norm_trace):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")

    pk_tiso = modal.peak("tiso")
    pk_siso = modal.peak("siso")
    summary = {
        "peaks": {
            "s_tiso_db": pk_tiso[0], "s_tiso_hz": pk_tiso[1],
            "s_siso_db": pk_siso[0], "s_siso_hz": pk_siso[1],
        },
        "sigma_max_overall_db": float(np.max(db(sweep.sigma_max))),
        "delta_max": margin.delta_max,
        "delta_max_argmin_hz": margin.argmin_f_hz,
        "det_gamma": [float(np.real(ol.det_gamma)), float(np.imag(ol.det_gamma))],
        "det_identity_rel_err": ol.prop_rel_err_max,
        "min_dist_to_minus_one": ol.min_dist_to_minus_one,
        "nyquist_argmin_hz": ol.argmin_f_hz,
        "stable_hint": ol.stable_hint,
        "compensators": {"input": use_ups, "output": use_gam},
        "files": ["analysis/sensitivity_sweep.csv", "analysis/input_sweep.csv",
                  "analysis/open_loop.csv"],
    }
    _write_json(adir / "summary.json", summary, sha)
    print(f"peaks: TISO {pk_tiso[0]:.2f} dB @ {pk_tiso[1]:.1f} Hz, "
          f"SISO {pk_siso[0]:.2f} dB @ {pk_siso[1]:.1f} Hz; "
          f"delta_max {margin.delta_max:.3e} @ {margin.argmin_f_hz:.3g} Hz")
    return 0


def _load_uncertainty(spec, pair_dims, seed_override):
    u = spec.get("uncertainty")
    n_y, n_s, n_f = pair_dims
    if not u:
        return sim.UncertaintySpec.zero(n_y, n_s, n_f)
    if "delta_s_file" in u or "delta_f_file" in u:
        return sim.UncertaintySpec(
            delta_s=_read_matrix(u["delta_s_file"]),
            delta_f=_read_matrix(u["delta_f_file"]))
    norm = float(u.get("combined_norm", 0.0))
    if norm == 0.0:
        return sim.UncertaintySpec.zero(n_y, n_s, n_f)
    seed = seed_override if seed_override is not None else int(u.get("seed", 0))
    return sim.UncertaintySpec.random_with_norm(n_y, n_s, n_f, norm, seed)


def cmd_simulate(args):
    spec = load_runspec(args.spec)
    sha = spec_hash(spec)
    out = _outdir(args)
    dsn, _ = _load_design(out)
    pcfg = _plant_config(spec)
    scfg = spec.get("sim", {})
    n_samples = int(scfg.get("n_samples", 10000))
    R_s, R_f = dsn.factorization.reconstruct()
    pair = numlin.ResponsePair(R_s=R_s, R_f=R_f)
    model = sim.DisturbanceModel.from_obj(spec.get("disturbance", {}))
    if args.seed is not None:
        model = sim.DisturbanceModel(resonances=model.resonances,
                                     broadband_std=model.broadband_std,
                                     offset=model.offset, seed=args.seed)
    d = sim.gen_disturbance(model, pair, n_samples, pcfg["f_s"])
    unc = _load_uncertainty(spec, (pair.n_y, pair.n_s, pair.n_f), args.seed)
    plant = sim.PlantParams(a_s=pcfg["a_s"], a_f=pcfg["a_f"], tau_d=pcfg["tau_d"])
    trace = sim.simulate_two_array(dsn, plant, d, unc, f_s=pcfg["f_s"],
                                   meta={"spec_sha256": sha, "seed": model.seed,
                                         "uncertainty_norm": unc.combined_norm()})
    if args.format == "bin":
        path = out / "trace.bin"
        trace.save_bin(path)
    else:
        path = out / "trace.csv"
        trace.save_csv(path)
    _write_json(out / "trace_meta.json", {
        "file": path.name, "n_samples": trace.n_samples, "f_s": trace.f_s,
        "seed": model.seed, "uncertainty_norm": unc.combined_norm(),
        "rms_y": float(np.sqrt(np.mean(trace.y**2))),
    }, sha)
    print(f"simulated {trace.n_samples} samples -> {path.name} "
          f"(rms y = {np.sqrt(np.mean(trace.y**2)):.4g})")
    return 0


def _load_trace(args, out):
    if args.trace:
        p = Path(args.trace)
    else:
        p = out / "trace.bin"
        if not p.exists():
            p = out / "trace.csv"
    if not p.exists():
        raise SpecError(f"no trace at {p}; run `cdctl simulate` first")
    if p.suffix == ".bin":
        return sim.SimTrace.load_bin(p)
    return sim.SimTrace.load_csv(p)


def cmd_spectrum(args):
    spec = load_runspec(args.spec) if args.spec else {}
    sha = spec_hash(spec)
    out = _outdir(args)
    trace = _load_trace(args, out)
    cfg = spec.get("spectrum", {})
    n_segments = int(cfg.get("n_segments", 1))
    window = cfg.get("window", "rect")
    sdir = out / "spectra"
    sdir.mkdir(exist_ok=True)
    summaries = {}
    for tag, arr in (("y", trace.y), ("us", trace.u_s), ("uf", trace.u_f)):
        if arr.shape[0] == 0:
            continue
        spec_set = spectral.welch_asd(arr, trace.f_s, n_segments, window=window)
        spectral.write_spectrum_csv(sdir / f"asd_{tag}.csv", spec_set)
        spectral.write_spectrum_csv(sdir / f"ibm_{tag}.csv", spec_set,
                                    curves=spectral.ibm(spec_set))
        summaries[tag] = spectral.spectrum_summary(spec_set)
    _write_json(sdir / "spectrum_summary.json",
                {"n_segments": n_segments, "window": window, "channels": summaries},
                sha)
    print(f"spectra for {', '.join(summaries)} -> {sdir}/")
    return 0


def cmd_report(args):
    spec = load_runspec(args.spec) if args.spec else {}
    sha = spec_hash(spec)
    out = _outdir(args)
    report = {"out_dir": str(out), "stages": {}, "hash_consistent": True}
    hashes = set()
    for name, path in (("gen", out / "gen_meta.json"),
                       ("factor", out / "factor_report.json"),
                       ("analysis", out / "analysis" / "summary.json"),
                       ("trace", out / "trace_meta.json"),
                       ("spectrum", out / "spectra" / "spectrum_summary.json")):
        if path.exists():
            obj = _read_json(path)
            report["stages"][name] = obj
            hashes.add(obj.get("spec_sha256"))
    report["hash_consistent"] = len(hashes) <= 1
    checks = {}
    if "factor" in report["stages"]:
        checks["factorization"] = "pass" if report["stages"]["factor"]["pass"] else "fail"
    if "analysis" in report["stages"]:
        a = report["stages"]["analysis"]
        checks["det_identity"] = "pass" if a["det_identity_rel_err"] <= 1e-8 else "fail"
        checks["delta_max_positive"] = "pass" if a["delta_max"] > 0 else "fail"
    checks["hash_traceability"] = "pass" if report["hash_consistent"] else "fail"
    report["checks"] = checks
    report["non_reproducible"] = (
        "Measured machine spectra and the published condition numbers "
        "(kappa(R)=1159, kappa(Sigma_s)=4.3, kappa(Sigma_f)=4.5) depend on "
        "proprietary response matrices; this toolkit substitutes seeded "
        "synthetic plants with property-based checks."
    )
    _write_json(out / "report.json", report, sha)
    status = "pass" if all(v == "pass" for v in checks.values()) else "FAIL"
    print(f"report: {json.dumps(checks)} [{status}]")
    return 0


# -- entry point ------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="cdctl",
        description="Design and analysis pipeline for two-array cross-directional control.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--spec", help="run-spec JSON file")
    common.add_argument("--out", default="cdctl_out", help="pipeline output directory")
    common.add_argument("--seed", type=int, default=None, help="override the spec seed")
    common.add_argument("--workers", type=int, default=1, help="parallel workers")
    common.add_argument("--format", choices=("csv", "json", "bin"), default="csv",
                        help="output format where applicable")
    for name, fn, extra in (
            ("gen", cmd_gen, ()),
            ("factor", cmd_factor, ("--rs", "--rf")),
            ("design", cmd_design, ()),
            ("analyze", cmd_analyze, ()),
            ("simulate", cmd_simulate, ()),
            ("spectrum", cmd_spectrum, ("--trace",)),
            ("report", cmd_report, ())):
        p = sub.add_parser(name, parents=[common])
        for flag in extra:
            p.add_argument(flag)
        p.set_defaults(func=fn)
    return parser


def _require_spec(args):
    if args.command in ("gen", "design", "analyze", "simulate") and not args.spec:
        raise SpecError(f"`cdctl {args.command}` requires --spec")


def main(argv=None):
    level = os.environ.get("CDCTL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        _require_spec(args)
        return args.func(args)
    except VALIDATION_ERRORS + (SpecError,) as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc), "exit": 2},
                  sys.stderr)
        sys.stderr.write("\n")
        return 2
    except NUMERICAL_ERRORS as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc), "exit": 3},
                  sys.stderr)
        sys.stderr.write("\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
