"""Command-line pipeline: simulate, detect, preflight, fit, diagnose, assess, usual.

Every option can also be set in an INI file passed with ``--config``; the
command line wins over the file, which wins over the built-in defaults
(print them with ``--print-config``).  Exit status is 0 on success, 2 on
invalid input or configuration and 3 when the sampler hits a non-finite
log density.
"""

import argparse
import configparser
import io
import logging
import os
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__, archive, assess, diagnose, ingest, simulate, usual
from .bouts import BoutDetector
from .ingest import IngestError
from .mcmc import PRIOR_PRESETS, ChainConfig, NumericError, panel_from_days, run_chains

logger = logging.getLogger("usualmvpa")

DEFAULTS = {
    "run": dict(threads=0, log_level="INFO"),
    "simulate": dict(n=300, days=2, count_model="genpois", lam=0.09, kappa=2.0, sigma2_y=0.47,
                     sigma2_b1=0.82, sigma2_b2=0.28, rho_b=0.41, missing_job=0.0, minutes=True),
    "detect": dict(kind="met", met_threshold=3.0, count_threshold=2020.0, intercept="", slope="",
                   rest_met=1.0, cap=2500.0, excess_floor=0.5),
    "preflight": dict(cap=10, alpha=0.05),
    "fit": dict(chains=3, iters=20000, burnin=5000, thin=5, prior="paper", model="genpois",
                csv=False),
    "diagnose": dict(max_lag=50),
    "assess": dict(replicates=1000, method="homogeneity", compare_negbin=False),
    "usual": dict(threshold=usual.GUIDELINE_MET_MINUTES, draws=2000, grid="0:300:1",
                  population=",".join(usual.BUILTIN_POPULATIONS), weighted=False),
}


class UsageError(ValueError):
    pass


# --------------------------------------------------------------------------
# configuration


def default_config():
    cp = configparser.ConfigParser()
    for section, values in DEFAULTS.items():
        cp[section] = {k: str(v) for k, v in values.items()}
    return cp


def config_text(cp):
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def load_config(path):
    cp = default_config()
    if path is not None:
        if not Path(path).exists():
            raise UsageError(f"config file {path} not found")
        user = configparser.ConfigParser()
        user.read(path)
        for section in user.sections():
            if section not in DEFAULTS:
                raise UsageError(f"unknown config section [{section}]")
            for key, value in user[section].items():
                if key not in DEFAULTS[section]:
                    raise UsageError(f"unknown key {key!r} in section [{section}]")
                cp[section][key] = value
    return cp


def setting(args, cp, section, key):
    """Command-line value if given, otherwise the config value cast like its default."""
    value = getattr(args, key, None)
    if value is not None:
        return value
    default = DEFAULTS[section][key]
    if isinstance(default, bool):
        return cp.getboolean(section, key)
    if isinstance(default, int):
        return cp.getint(section, key)
    if isinstance(default, float):
        return cp.getfloat(section, key)
    return cp.get(section, key)


def resolved(args, cp, section):
    return {key: setting(args, cp, section, key) for key in DEFAULTS[section]}


def threads(args, cp):
    n = setting(args, cp, "run", "threads")
    return n if n > 0 else (os.cpu_count() or 1)


def write_run_manifest(out, command, options, inputs, seed=None, extra=None):
    payload = dict(
        command=command,
        package_version=__version__,
        seed=seed,
        options=options,
        config_hash=archive.stable_hash(archive._jsonable(options)),
        inputs={str(k): archive.file_hash(v) for k, v in inputs.items()},
    )
    payload.update(extra or {})
    archive.write_json(payload, Path(out) / f"manifest_{command}.json")


def _out_dir(path):
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write_csv(frame, path, comment=None):
    frame.to_csv(path, index=False, float_format="%.10g")
    if comment:
        with open(path, "a") as fh:
            fh.write(f"# {comment}\n")


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, cp):
    opt = resolved(args, cp, "simulate")
    out = _out_dir(args.out)
    rng = np.random.default_rng(args.seed)
    truth = simulate.reference_truth(opt["lam"], opt["sigma2_y"], opt["sigma2_b1"],
                                     opt["sigma2_b2"], opt["rho_b"])
    truth.kappa = opt["kappa"]
    records = simulate.simulate_covariates(opt["n"], rng, missing_job=opt["missing_job"])
    complete, _ = ingest.impute_physical_job(records)
    design = ingest.build_design(complete)
    days, panel, hidden = simulate.simulate_dataset(truth, design.Z, rng, design.person_ids,
                                                    opt["days"], opt["count_model"])
    ingest.write_covariates(records, out / "covariates.csv")
    ingest.write_days(days, out / "days_truth.csv")
    pd.DataFrame(dict(person_id=design.person_ids, b1=hidden.b[:, 0], b2=hidden.b[:, 1])).to_csv(
        out / "hidden.csv", index=False, float_format="%.17g")
    if opt["minutes"]:
        series = [simulate.simulate_minutes(d, rng) for d in days]
        ingest.write_minutes(series, out / "minutes.csv")
    truth_json = dict(gamma=truth.gamma, beta=truth.beta, lam=truth.lam, kappa=truth.kappa,
                      sigma2_y=truth.sigma2_y, Sigma_b=truth.Sigma_b, columns=design.columns,
                      count_model=opt["count_model"])
    write_run_manifest(out, "simulate", opt, {}, args.seed, dict(truth=archive._jsonable(truth_json)))
    logger.info("simulated %d persons x %d days into %s", opt["n"], opt["days"], out)


def cmd_detect(args, cp):
    opt = resolved(args, cp, "detect")
    out = _out_dir(args.out)
    series, report = ingest.load_minutes(args.minutes, opt["kind"])
    if opt["kind"] == "count":
        if opt["intercept"] == "" or opt["slope"] == "":
            raise ingest.ConfigError("count data need --intercept and --slope for the MET conversion")
        conv = ingest.CountConversion(float(opt["intercept"]), float(opt["slope"]))
        series = [ingest.counts_to_mets(s, conv, opt["count_threshold"], opt["rest_met"]) for s in series]
    incomplete = set(report.incomplete_persons)
    detector = BoutDetector(threshold=opt["met_threshold"], excess_floor=opt["excess_floor"])
    days = [detector.detect(s) for s in series if s.person_id not in incomplete]
    kept, removed = ingest.remove_outliers(days, opt["cap"])
    ingest.write_days(kept, out / "days.csv")
    ingest.write_bouts(kept, out / "bouts.csv")
    rows = report.rows() + [dict(person_id=r["person_id"], day_index=r["day_index"], reason=r["reason"])
                            for r in removed]
    pd.DataFrame(rows, columns=["person_id", "day_index", "reason"]).to_csv(out / "rejected.csv", index=False)
    write_run_manifest(out, "detect", opt, {"minutes": args.minutes})
    logger.info("%d person-days kept, %d rows rejected", len(kept), len(rows))


def _panel_inputs(days_path, cov_path):
    days = ingest.load_days(days_path)
    records = ingest.load_covariates(cov_path)
    with_days = {d.person_id for d in days}
    records = [r for r in records if r.person_id in with_days]
    missing = with_days - {r.person_id for r in records}
    if missing:
        raise UsageError(f"{len(missing)} persons have days but no covariates, e.g. {sorted(missing)[:3]}")
    imputed_ids = [r.person_id for r in records if r.physical_job is None]
    records, imp = ingest.impute_physical_job(records)
    design = ingest.build_design(records)
    panel = panel_from_days(days, design)
    frame = ingest.covariate_frame(records).loc[list(design.person_ids)]
    return panel, design, frame, imp, imputed_ids


def cmd_preflight(args, cp):
    opt = resolved(args, cp, "preflight")
    out = _out_dir(args.out)
    days = ingest.load_days(args.days)
    ids = tuple(dict.fromkeys(d.person_id for d in days))
    design = ingest.DesignMatrix(np.ones((len(ids), 1)), ids, ("intercept",), None, np.ones(len(ids)))
    panel = panel_from_days(days, design)
    if panel.J != 2:
        raise UsageError("preflight needs exactly two days per person")
    table = diagnose.preflight(panel, cap=opt["cap"], alpha=opt["alpha"])
    _write_csv(table, out / "preflight.csv")
    write_run_manifest(out, "preflight", opt, {"days": args.days})


def cmd_fit(args, cp):
    opt = resolved(args, cp, "fit")
    if opt["prior"] not in PRIOR_PRESETS:
        raise UsageError(f"unknown prior preset {opt['prior']!r}")
    if opt["model"] not in ("genpois", "negbin"):
        raise UsageError(f"unknown model {opt['model']!r}")
    panel, design, frame, imp, imputed_ids = _panel_inputs(args.days, args.covariates)
    resume = None
    if args.resume:
        prev = archive.load_archive(args.resume)
        if prev.manifest["data_hash"] != panel.digest():
            raise UsageError("resume archive was fitted to different data")
        if prev.manifest["seed"] != args.seed:
            raise UsageError(f"resume needs the original seed {prev.manifest['seed']}")
        cfg = archive.chain_config_from_manifest(prev.manifest, n_iter=opt["iters"])
        prior = prev.draws.prior
        opt.update(model=prev.draws.count_model, prior=prev.manifest["prior_preset"],
                   chains=cfg.n_chains, burnin=cfg.n_burnin, thin=cfg.thin)
        resume = prev.draws
    else:
        cfg = ChainConfig(n_chains=opt["chains"], n_iter=opt["iters"], n_burnin=opt["burnin"],
                          thin=opt["thin"], seed=args.seed)
        prior = PRIOR_PRESETS[opt["prior"]]
    cfg = archive.dataclasses.replace(cfg, n_jobs=min(threads(args, cp), cfg.n_chains))
    logger.info("fitting %s model: %d persons, %d chains x %d iterations", opt["model"], panel.n,
                cfg.n_chains, cfg.n_iter)
    draws = run_chains(panel, prior, cfg, opt["model"], design.columns, resume=resume)
    out = _out_dir(args.out)
    inputs = {"days": archive.file_hash(args.days), "covariates": archive.file_hash(args.covariates)}
    archive.save_archive(out, draws, panel, frame, opt["prior"], inputs, write_csv=opt["csv"],
                         extra=dict(encoder=dict(center=design.encoder.center_.to_dict(),
                                                 scale=design.encoder.scale_.to_dict())))
    imp_rows = [dict(person_id=p, reason="physical_job_imputed") for p in imputed_ids]
    pd.DataFrame(imp_rows, columns=["person_id", "reason"]).to_csv(out / "imputation.csv", index=False)
    logger.info("wrote %d draws per chain to %s", draws.n_draws, out)


def cmd_diagnose(args, cp):
    opt = resolved(args, cp, "diagnose")
    arc = archive.load_archive(args.archive)
    out = _out_dir(args.out or args.archive)
    rep = diagnose.convergence_report(arc.draws)
    _write_csv(rep.table, out / "convergence.csv")
    _write_csv(diagnose.acf_table(arc.draws, opt["max_lag"]), out / "acf.csv")
    rows = []
    for c, chain in enumerate(arc.draws.chains):
        for block, rate in chain.acceptance.items():
            rows.append(dict(chain=c, block=block, phase="sampling", rate=rate))
        for block, rate in chain.acceptance_burnin.items():
            rows.append(dict(chain=c, block=block, phase="burnin", rate=rate))
    _write_csv(pd.DataFrame(rows), out / "acceptance.csv")
    write_run_manifest(out, "diagnose", opt, {"manifest": Path(args.archive) / "manifest.json"})
    status = "all parameters pass" if rep.passed else "some parameters fail the thresholds"
    logger.info("convergence: %s", status)


def _seed(args, arc):
    return args.seed if args.seed is not None else arc.manifest["seed"]


def cmd_assess(args, cp):
    opt = resolved(args, cp, "assess")
    arc = archive.load_archive(args.archive)
    out = _out_dir(args.out or args.archive)
    seed = _seed(args, arc)
    rng = np.random.default_rng(seed)
    fits = {arc.draws.count_model: arc.draws}
    if opt["compare_negbin"] and "negbin" not in fits:
        cfg = archive.dataclasses.replace(arc.draws.config, n_jobs=min(threads(args, cp), arc.draws.n_chains))
        fits["negbin"] = assess.fit_negbin_variant(arc.panel, arc.draws.prior, cfg, arc.draws.columns)
    table4 = None
    summary_rows, table5, ppc = [], [], []
    for name, draws in fits.items():
        res = assess.posterior_predictive_check(draws, arc.panel, opt["replicates"], rng, opt["method"])
        if table4 is None:
            table4 = res.combo[["cell", "observed"]].copy()
        table4[f"expected_{name}"] = res.combo["expected"]
        stat, df, p = res.chisq
        summary_rows.append((name, stat, df, p))
        ks = res.ks.iloc[0].to_dict()
        table5.append(dict(model=name, **ks))
        frame = res.ppc.copy()
        frame.insert(0, "model", name)
        ppc.append(frame)
    for label, k in (("chisq", 1), ("df", 2), ("p_value", 3)):
        row = {"cell": label, "observed": np.nan}
        row.update({f"expected_{r[0]}": r[k] for r in summary_rows})
        table4 = pd.concat([table4, pd.DataFrame([row])], ignore_index=True)
    note = (f"chi-square by {opt['method']}; df = cells - 1 = 8, with no reduction for "
            "expectations estimated from replicates")
    _write_csv(table4, out / "table4.csv", comment=note)
    _write_csv(pd.DataFrame(table5), out / "table5.csv")
    _write_csv(pd.concat(ppc, ignore_index=True), out / "ppc_report.csv")
    write_run_manifest(out, "assess", opt, {"manifest": Path(args.archive) / "manifest.json"}, seed)


def parse_grid(text):
    try:
        start, stop, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise UsageError(f"grid must look like start:stop:step, got {text!r}") from None
    if step <= 0 or stop < start:
        raise UsageError("grid needs step > 0 and stop >= start")
    return np.arange(start, stop + step / 2, step)


def _load_weights(path, person_ids):
    frame = pd.read_csv(path, dtype={"person_id": str})
    if list(frame.columns) != ["person_id", "weight"]:
        raise UsageError("weights file needs header person_id,weight")
    w = frame.set_index("person_id")["weight"]
    missing = [p for p in person_ids if p not in w.index]
    if missing:
        raise UsageError(f"no weight for persons {missing[:3]}")
    return w.loc[list(person_ids)].to_numpy(dtype=float)


def cmd_usual(args, cp):
    opt = resolved(args, cp, "usual")
    arc = archive.load_archive(args.archive)
    out = _out_dir(args.out or args.archive)
    seed = _seed(args, arc)
    ids = arc.panel.person_ids
    cov = arc.covariates.loc[list(ids)] if arc.covariates is not None else None
    weights = None
    if args.weights:
        weights = _load_weights(args.weights, ids)
        opt["weighted"] = True
    elif opt["weighted"]:
        if cov is None or "weight" not in cov:
            raise UsageError("weighted compliance needs a weight column or --weights")
        weights = cov["weight"].to_numpy(dtype=float)
    total = arc.draws.n_chains * arc.draws.n_draws
    L = min(opt["draws"], total)
    u = usual.simulate_t3(arc.draws, arc.panel.Z, L, np.random.default_rng(seed), ids, cov, weights)
    pops = args.population if args.population else [p for p in opt["population"].split(",") if p]
    rows = []
    for pop in pops:
        try:
            sub = usual.subpopulation(u, pop)
        except Exception as exc:
            raise UsageError(f"population {pop!r}: {exc}") from None
        c = (usual.compliance_weighted(sub, threshold=opt["threshold"]) if opt["weighted"]
             else usual.compliance(sub, opt["threshold"]))
        rows.append(dict(population=pop, n=sub.n, compliance=c.mean, lower=c.lower, upper=c.upper,
                         threshold=opt["threshold"], weighted=opt["weighted"], draws=u.L))
    _write_csv(pd.DataFrame(rows), out / "compliance.csv")
    grid = parse_grid(opt["grid"])
    if u.L >= 100:
        _write_csv(usual.density_bands(u, grid), out / "density.csv")
    else:
        logger.warning("only %d draws; density.csv needs at least 100 and was skipped", u.L)
    inputs = {"manifest": Path(args.archive) / "manifest.json"}
    if args.weights:
        inputs["weights"] = args.weights
    write_run_manifest(out, "usual", opt, inputs, seed)


# --------------------------------------------------------------------------
# argument parsing


def build_parser():
    parser = argparse.ArgumentParser(prog="usualmvpa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--config", help="INI file with option defaults")
    parser.add_argument("--print-config", action="store_true", help="print the effective configuration")
    parser.add_argument("--threads", type=int, help="worker processes (default: logical cores)")
    parser.add_argument("--log-level", dest="log_level", help="DEBUG, INFO, WARNING")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("simulate", help="synthetic covariates, days and minute traces")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--days", type=int)
    p.add_argument("--count-model", dest="count_model", choices=("genpois", "negbin"))
    for name in ("lam", "kappa", "sigma2_y", "sigma2_b1", "sigma2_b2", "rho_b"):
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float)
    p.add_argument("--missing-job", dest="missing_job", type=float)
    p.add_argument("--no-minutes", dest="minutes", action="store_false", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("detect", help="bouts and day outcomes from minute data")
    p.add_argument("--minutes", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--kind", choices=("met", "count"))
    p.add_argument("--met-threshold", dest="met_threshold", type=float)
    p.add_argument("--count-threshold", dest="count_threshold", type=float)
    p.add_argument("--intercept")
    p.add_argument("--slope")
    p.add_argument("--rest-met", dest="rest_met", type=float)
    p.add_argument("--cap", type=float)
    p.add_argument("--excess-floor", dest="excess_floor", type=float)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("preflight", help="day exchangeability checks")
    p.add_argument("--days", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--cap", type=int)
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_preflight)

    p = sub.add_parser("fit", help="run the sampler and write a draw archive")
    p.add_argument("--days", required=True)
    p.add_argument("--covariates", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--chains", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--thin", type=int)
    p.add_argument("--prior", choices=sorted(PRIOR_PRESETS))
    p.add_argument("--model", choices=("genpois", "negbin"))
    p.add_argument("--resume", help="archive to continue")
    p.add_argument("--csv", action="store_true", default=None, help="also write draws.csv")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("diagnose", help="R-hat, MCSE, autocorrelation and acceptance rates")
    p.add_argument("--archive", required=True)
    p.add_argument("--out")
    p.add_argument("--max-lag", dest="max_lag", type=int)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("assess", help="posterior predictive checks")
    p.add_argument("--archive", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--replicates", type=int)
    p.add_argument("--method", choices=("homogeneity", "goodness_of_fit"))
    p.add_argument("--compare-negbin", dest="compare_negbin", action="store_true", default=None)
    p.set_defaults(func=cmd_assess)

    p = sub.add_parser("usual", help="usual MVPA distribution and guideline compliance")
    p.add_argument("--archive", required=True)
    p.add_argument("--out")
    p.add_argument("--seed", type=int)
    p.add_argument("--threshold", type=float)
    p.add_argument("--population", action="append",
                   help="built-in name or expression over covariates; repeatable")
    p.add_argument("--weights", help="CSV with person_id,weight")
    p.add_argument("--weighted", action="store_true", default=None,
                   help="use the covariate file's weight column")
    p.add_argument("--grid", help="start:stop:step in MET-minutes")
    p.add_argument("--draws", type=int)
    p.set_defaults(func=cmd_usual)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cp = load_config(args.config)
        if args.print_config:
            sys.stdout.write(config_text(cp))
            return 0
        if args.command is None:
            parser.print_usage(sys.stderr)
            return 2
        logging.basicConfig(level=setting(args, cp, "run", "log_level").upper(),
                            format="%(levelname)s %(message)s")
        args.func(args, cp)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError, KeyError) as exc:
        kind = "input error" if isinstance(exc, IngestError) else "error"
        print(f"{kind}: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
