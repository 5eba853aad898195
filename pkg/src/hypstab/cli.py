"""Command-line front end.

Subcommands:

* check-structure -- structural checks at the equilibrium, JSON report
* check-gains     -- boundary gain admissibility, JSON report
* simulate        -- closed-loop run, CSV/JSON outputs, decay fit
* sweep           -- (k1, k2) grid: admissibility and fitted decay rates
* sve-design      -- print the river model's design quantities

Exit codes: 0 pass, 1 condition failed, 2 model/assumption error,
3 blow-up, 64 usage error.  Configuration is a single JSON file (--config);
all outputs go to --out.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import custom, feedback, lyapunov, structure, sve
from . import simulator as sim
from .errors import BlowUp, HypstabError

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_MODEL = 2
EXIT_BLOWUP = 3
EXIT_USAGE = 64

_DEFAULT_COMPONENTS = (1.0, 0.5, -0.3)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


# ---------------------------------------------------------------------------
# configuration plumbing

def _load_config(path):
    if path is None:
        return {}
    if not os.path.exists(path):
        raise _UsageError(f"config file not found: {path}")
    try:
        with open(path) as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        raise _UsageError(f"config is not valid JSON: {exc}") from exc


def _build_model(cfg):
    """(SystemModel, SveParameters or None) from the config."""
    selector = cfg.get("model", "sve")
    if selector == "sve":
        params = cfg.get("params")
        p = sve.parameters_from_dict(params) if params else sve.reference_parameters()
        return sve.as_system_model(p), p
    if selector.startswith("custom:"):
        path = selector.split(":", 1)[1]
        if not os.path.exists(path):
            raise _UsageError(f"custom model file not found: {path}")
        return custom.load_model(path), None
    raise _UsageError(f"unknown model selector {selector!r}")


def _build_gain(cfg, model, p):
    if p is not None and "k1" in cfg and "k2" in cfg:
        return sve.feedback_matrix(float(cfg["k1"]), float(cfg["k2"]), p)
    if "K" in cfg:
        return feedback.FeedbackGain(np.asarray(cfg["K"], dtype=float), model.m)
    raise _UsageError("config must provide gains: (k1, k2) for sve or a K matrix")


def _sim_config(cfg):
    simc = dict(cfg.get("sim", {}))
    return sim.SimConfig(**simc)


def _initial_field(cfg, model, config):
    """Smooth compact bump in the physical variables, transformed to V.

    Profile per component j: amp * c_j * cos(pi (x - center)/(2 width))^4
    inside |x - center| <= width, zero outside.
    """
    ic = dict(cfg.get("initial", {}))
    amp = float(ic.get("amplitude", 1e-3))
    cap = float(cfg.get("amplitude_cap", 1e-2))
    if amp > cap and not cfg.get("allow_large_amplitude", False):
        raise _UsageError(
            f"amplitude {amp} exceeds the small-data cap {cap}; "
            f"set allow_large_amplitude to override"
        )
    center = float(ic.get("center", 0.5))
    width = float(ic.get("width", 0.4))
    comps = np.asarray(
        ic.get("components", _DEFAULT_COMPONENTS[: model.n]), dtype=float
    )
    if comps.shape != (model.n,):
        raise _UsageError(f"initial components must have length {model.n}")
    x = (np.arange(config.N) + 0.5) / config.N
    s = (x - center) / width
    prof = np.where(np.abs(s) < 1.0, np.cos(0.5 * np.pi * np.clip(s, -1, 1)) ** 4, 0.0)
    U0 = amp * np.outer(prof, comps)
    return sim.transform_to_V(U0, model.P0)


def _write_json(payload, path):
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _emit(args, payload, text_lines):
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    elif not args.quiet:
        for line in text_lines:
            print(line)


# ---------------------------------------------------------------------------
# commands

def cmd_check_structure(args, cfg):
    model, p = _build_model(cfg)
    if "R" in cfg:
        R = np.asarray(cfg["R"], dtype=float)
    elif p is not None:
        R = sve.dissipativity_weight(p)
    else:
        R = None
    report = structure.check_partial_dissipativity(model, R=R)
    payload = report.to_dict()
    _write_json(payload, os.path.join(args.out, "structure_report.json"))
    _emit(args, payload, [
        f"symmetrizer residual: {report.symmetrizer_residual:.3e}",
        f"source block residual: {report.pdq_residual:.3e}",
        f"dissipativity margin: {report.dissipativity_margin:.3e}",
        f"passed: {report.passed}",
    ])
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_check_gains(args, cfg):
    model, p = _build_model(cfg)
    K = _build_gain(cfg, model, p)
    if p is not None:
        spec = sve.spectrum0(p)
        _, _, X11, X22, X33 = sve.eigvector_matrices(p)
        X1 = np.array([[X11]])
        X2 = np.diag([X22, X33])
    else:
        from .matrixcore import spectral_decompose
        spec = spectral_decompose(np.asarray(model.A(np.zeros(model.n)), dtype=float))
        X1, X2, _ = structure.compute_boundary_weights(
            spec, np.asarray(model.A0(np.zeros(model.n)), dtype=float)
        )
    report = feedback.check_gain(spec, X1, X2, K)
    payload = {"general": report.to_dict()}
    if p is not None and "k1" in cfg and "k2" in cfg:
        payload["sve"] = sve.gain_admissible(
            float(cfg["k1"]), float(cfg["k2"]), p
        ).to_dict()
    _write_json(payload, os.path.join(args.out, "gain_report.json"))
    _emit(args, payload, [
        f"M1 PD: {report.pd1} (margin {report.margin1:.3e})",
        f"M2 PD: {report.pd2} (margin {report.margin2:.3e})",
        f"passed: {report.passed}",
    ])
    return EXIT_OK if report.passed else EXIT_FAIL


def _run_scenario(cfg, model, p, K, config):
    tmodel, spec_V = _transformed_for(model, p)
    V0 = _initial_field(cfg, model, config)
    traj = sim.run(tmodel, spec_V, K, V0, config)
    trace = lyapunov.build_trace(traj, tmodel, spec_V, alpha=cfg.get("alpha"))
    return traj, trace, tmodel, spec_V


def _transformed_for(model, p):
    if p is not None:
        return sve.transformed_model(p)
    tmodel = sim.transformed(model)
    from .matrixcore import spectral_decompose
    specU = spectral_decompose(np.asarray(model.A(np.zeros(model.n)), dtype=float))
    return tmodel, sim.spectrum_to_V(specU, model.P0, model.P0_inv)


def _fit_window(cfg, config):
    win = cfg.get("fit_window")
    if win is not None:
        return float(win[0]), float(win[1])
    return 0.625 * config.t_end, config.t_end


def _write_decay_outputs(args, trace):
    dat = os.path.join(args.out, "decay.dat")
    with open(dat, "w") as f:
        f.write("# t  E_H2  Ltotal\n")
        for row in trace.samples:
            f.write(f"{row[0]:.17g} {row[5]:.17g} {row[4]:.17g}\n")
    gp = os.path.join(args.out, "decay.gp")
    with open(gp, "w") as f:
        f.write(
            "set logscale y\n"
            "set xlabel 't'\n"
            "set ylabel 'energy'\n"
            "set terminal pngcairo size 900,600\n"
            "set output 'decay.png'\n"
            f"plot 'decay.dat' using 1:2 with lines title 'E_H2', \\\n"
            f"     'decay.dat' using 1:3 with lines title 'Ltotal'\n"
        )


def cmd_simulate(args, cfg):
    model, p = _build_model(cfg)
    K = _build_gain(cfg, model, p)
    config = _sim_config(cfg)
    try:
        traj, trace, tmodel, _ = _run_scenario(cfg, model, p, K, config)
    except BlowUp as exc:
        if exc.last_state is not None and not args.quiet:
            print(f"blow-up at t={exc.t:.6g}; last snapshot kept", file=sys.stderr)
        return EXIT_BLOWUP
    nu_hat, residual = lyapunov.fit_decay_rate(trace, _fit_window(cfg, config))
    sim.export_trajectory_csv(traj, model.P0, os.path.join(args.out, "trajectory.csv"))
    sim.export_traces_csv(traj, os.path.join(args.out, "traces.csv"))
    trace.to_csv(os.path.join(args.out, "lyapunov.csv"))
    trace.fit_to_json(os.path.join(args.out, "fit.json"))
    _write_decay_outputs(args, trace)
    payload = {
        "nu_hat": nu_hat,
        "residual": residual,
        "alpha": trace.alpha,
        "steps": traj.steps_total,
        "samples": len(traj.states),
    }
    _emit(args, payload, [
        f"steps: {traj.steps_total}, samples: {len(traj.states)}",
        f"alpha: {trace.alpha}",
        f"nu_hat: {nu_hat:.6g} (fit residual {residual:.3e})",
    ])
    return EXIT_OK


def _sweep_point(idx, k1, k2, p, tmodel, spec_V, V0, config, window, do_sim):
    try:
        rep = sve.gain_admissible(k1, k2, p)
    except HypstabError:
        return idx, k1, k2, False, False, float("nan")
    nu_hat = float("nan")
    if do_sim and rep.sufficient_pass:
        try:
            K = sve.feedback_matrix(k1, k2, p)
            traj = sim.run(tmodel, spec_V, K, V0, config)
            trace = lyapunov.build_trace(traj, tmodel, spec_V)
            nu_hat, _ = lyapunov.fit_decay_rate(trace, window)
        except HypstabError:
            nu_hat = float("nan")
    return idx, k1, k2, rep.sufficient_pass, rep.exact_pass, nu_hat


def cmd_sweep(args, cfg):
    model, p = _build_model(cfg)
    if p is None:
        raise _UsageError("sweep requires the sve model (gains are (k1, k2))")
    sw = cfg.get("sweep")
    if not sw or "k1" not in sw or "k2" not in sw:
        raise _UsageError("config must provide sweep.k1 and sweep.k2 as [lo, hi, count]")
    lo1, hi1, n1 = sw["k1"]
    lo2, hi2, n2 = sw["k2"]
    if int(n1) < 1 or int(n2) < 1:
        raise _UsageError("sweep grid counts must be >= 1")
    k1s = np.linspace(float(lo1), float(hi1), int(n1))
    k2s = np.linspace(float(lo2), float(hi2), int(n2))
    do_sim = bool(sw.get("simulate", True))
    workers = max(1, int(sw.get("workers", 4)))
    config = _sim_config(cfg)
    tmodel, spec_V = _transformed_for(model, p)
    V0 = _initial_field(cfg, model, config)
    window = _fit_window(cfg, config)

    jobs = [
        (i * len(k2s) + j, k1, k2)
        for i, k1 in enumerate(k1s)
        for j, k2 in enumerate(k2s)
    ]
    results = [None] * len(jobs)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futs = [
            pool.submit(_sweep_point, idx, k1, k2, p, tmodel, spec_V,
                        V0, config, window, do_sim)
            for idx, k1, k2 in jobs
        ]
        for fut in futs:
            out = fut.result()
            results[out[0]] = out

    path = os.path.join(args.out, "sweep.csv")
    with open(path, "w") as f:
        f.write("k1,k2,admissible_sufficient,admissible_exact,nu_hat\n")
        for _, k1, k2, suff, exact, nu in results:
            f.write(
                f"{k1:.17g},{k2:.17g},{int(suff)},{int(exact)},{nu:.17g}\n"
            )
    n_adm = sum(1 for r in results if r[3])
    _emit(args, {"points": len(results), "admissible_sufficient": n_adm},
          [f"{len(results)} points, {n_adm} sufficient-admissible -> {path}"])
    return EXIT_OK


def cmd_sve_design(args, cfg):
    params = cfg.get("params")
    p = sve.parameters_from_dict(params) if params else sve.reference_parameters()
    data = sve.spectral_data(p)
    payload = {"parameters": p.to_dict(), "spectral": data.to_dict()}
    lines = [
        f"lambda: {data.lam1:.12g} {data.lam2:.12g} {data.lam3:.12g}",
        f"X: {data.X11:.12g} {data.X22:.12g} {data.X33:.12g}",
        f"beta: {data.beta2:.12g} {data.beta3:.12g}",
        f"eta: {data.eta2:.12g} {data.eta3:.12g}",
        f"kappa_plus_sq_max: {data.kappa_plus_sq_max:.12g}",
        f"kappa_minus_sq_max: {data.kappa_minus_sq_max:.12g}",
    ]
    if "k1" in cfg and "k2" in cfg:
        rep = sve.gain_admissible(float(cfg["k1"]), float(cfg["k2"]), p)
        payload["gain"] = rep.to_dict()
        lines.append(f"sufficient LHS: {rep.sufficient_lhs} pass={rep.sufficient_pass}")
        lines.append(f"exact LHS: {rep.exact_lhs} pass={rep.exact_pass}")
    _write_json(payload, os.path.join(args.out, "sve_design.json"))
    _emit(args, payload, lines)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point

_COMMANDS = {
    "check-structure": cmd_check_structure,
    "check-gains": cmd_check_gains,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "sve-design": cmd_sve_design,
}


def _build_parser():
    parser = _Parser(prog="hypstab", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", default=None, help="JSON configuration file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--quiet", action="store_true")
    parser.add_argument("--json", action="store_true",
                        help="print the report as JSON on stdout")
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _load_config(args.config)
        os.makedirs(args.out, exist_ok=True)
        return _COMMANDS[args.command](args, cfg)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BlowUp as exc:
        print(f"blow-up: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except HypstabError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
