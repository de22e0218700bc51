"""On-disk draw archives and run manifests.

An archive is a directory::

    manifest.json      seed, configuration, prior, hashes, version
    draws/<name>.npy   gamma, beta, disp, sigma2_y, Sigma_b  ([chain, draw, ...])
    panel.pkl          the data the chains were fitted to
    covariates.csv     natural-unit covariates, one row per person (optional)
    state.pkl          final chain states, RNG states and proposals (for resume)
    draws.csv          optional long format ``chain,iter,param,value``

Every file is written deterministically, so two runs with the same seed and
configuration produce byte-identical archives.
"""

import dataclasses
import hashlib
import json
import pickle
from pathlib import Path

import numpy as np
import pandas as pd

from .mcmc import ChainConfig, PanelData, PosteriorDraws, PriorConfig

ARRAYS = ("gamma", "beta", "disp", "sigma2_y", "Sigma_b")
FORMAT_VERSION = 1


def package_version():
    from . import __version__

    return __version__


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, tuple):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


def config_dict(obj):
    """Dataclass fields as JSON-ready values (private caches dropped)."""
    return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}


def stable_hash(payload):
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_json(payload, path):
    Path(path).write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def build_manifest(draws, panel, prior_preset=None, inputs=None, extra=None):
    cfg = config_dict(draws.config)
    prior = config_dict(draws.prior)
    manifest = dict(
        format_version=FORMAT_VERSION,
        package_version=package_version(),
        seed=draws.config.seed,
        count_model=draws.count_model,
        columns=list(draws.columns),
        chain_config=cfg,
        prior_preset=prior_preset,
        prior=prior,
        config_hash=stable_hash(dict(chain_config=cfg, prior=prior, count_model=draws.count_model)),
        data_hash=panel.digest(),
        n_persons=panel.n,
        n_days=panel.J,
        draws_per_chain=draws.n_draws,
        inputs=dict(inputs or {}),
    )
    manifest.update(extra or {})
    return manifest


def long_frame(draws):
    """Draws as a long table ``chain, iter, param, value``.

    ``iter`` is the 1-based sweep index the draw was stored at.
    """
    cfg = draws.config
    iters = cfg.n_burnin + cfg.thin * np.arange(1, draws.n_draws + 1)
    parts = []
    for name, x in draws.scalar_params().items():
        chain, idx = np.divmod(np.arange(x.size), draws.n_draws)
        parts.append(pd.DataFrame(dict(chain=chain, iter=iters[idx], param=name, value=x.reshape(-1))))
    return pd.concat(parts, ignore_index=True)


def save_archive(path, draws, panel, covariates=None, prior_preset=None, inputs=None,
                 write_csv=False, extra=None):
    """Write ``draws`` (and what is needed to resume or reuse them) to ``path``."""
    path = Path(path)
    (path / "draws").mkdir(parents=True, exist_ok=True)
    for name in ARRAYS:
        np.save(path / "draws" / f"{name}.npy", getattr(draws, name))
    panel_arrays = dict(y1=panel.y1, y2=panel.y2, Z=panel.Z,
                        person_ids=np.array([str(p) for p in panel.person_ids]))
    if panel.weekend is not None:
        panel_arrays["weekend"] = panel.weekend
    with open(path / "panel.pkl", "wb") as fh:
        # np.savez stamps zip entries with the wall clock; a plain pickle does not
        pickle.dump(panel_arrays, fh, protocol=4)
    if covariates is not None:
        covariates.to_csv(path / "covariates.csv")
    with open(path / "state.pkl", "wb") as fh:
        pickle.dump(dict(chains=draws.chains, config=draws.config, prior=draws.prior), fh, protocol=4)
    if write_csv:
        long_frame(draws).to_csv(path / "draws.csv", index=False, float_format="%.17g")
    manifest = build_manifest(draws, panel, prior_preset, inputs, extra)
    write_json(manifest, path / "manifest.json")
    return manifest


@dataclasses.dataclass
class Archive:
    draws: PosteriorDraws
    panel: PanelData
    manifest: dict
    covariates: pd.DataFrame = None


def load_archive(path):
    path = Path(path)
    if not (path / "manifest.json").exists():
        raise FileNotFoundError(f"{path} is not a draw archive (no manifest.json)")
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported archive format {manifest.get('format_version')}")
    arrays = {name: np.load(path / "draws" / f"{name}.npy") for name in ARRAYS}
    with open(path / "state.pkl", "rb") as fh:
        state = pickle.load(fh)
    draws = PosteriorDraws(
        **arrays,
        count_model=manifest["count_model"],
        columns=tuple(manifest["columns"]),
        config=state["config"],
        prior=state["prior"],
        chains=state["chains"],
    )
    with open(path / "panel.pkl", "rb") as fh:
        pa = pickle.load(fh)
    panel = PanelData(pa["y1"], pa["y2"], pa["Z"], tuple(pa["person_ids"].tolist()), pa.get("weekend"))
    cov = None
    if (path / "covariates.csv").exists():
        cov = pd.read_csv(path / "covariates.csv", dtype={"person_id": str}).set_index("person_id")
    return Archive(draws, panel, manifest, cov)


def chain_config_from_manifest(manifest, **overrides):
    fields = {f.name for f in dataclasses.fields(ChainConfig)}
    kw = {k: v for k, v in manifest["chain_config"].items() if k in fields}
    kw.update(overrides)
    return ChainConfig(**kw)


def prior_from_manifest(manifest):
    fields = {f.name for f in dataclasses.fields(PriorConfig)}
    kw = {k: v for k, v in manifest["prior"].items() if k in fields}
    kw["lam_bounds"] = tuple(kw["lam_bounds"])
    return PriorConfig(**kw)
