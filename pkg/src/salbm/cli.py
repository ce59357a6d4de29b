"""``salbm`` command line: gen, sample, benchmark, estimate-beta, train, eval.

Every subcommand takes its parameters from an optional JSON ``--config``
file, overridden by command-line flags.  Unknown config keys are rejected.
Outputs are CSV/JSON files whose first lines record the config hash and the
master seed.

Exit codes: 0 success, 2 configuration error, 3 runtime or validation error.
"""

import argparse
import csv
import hashlib
import json
import logging
import os
import sys

import numpy as np

log = logging.getLogger("salbm")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class ConfigError(Exception):
    pass


def _bool(s):
    if isinstance(s, bool):
        return s
    if str(s).lower() in ("1", "true", "yes", "on"):
        return True
    if str(s).lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _floats(s):
    if isinstance(s, (list, tuple)):
        return [float(x) for x in s]
    return [float(x) for x in str(s).split(",") if x.strip()]


def _ints(s):
    if isinstance(s, (list, tuple)):
        return [int(x) for x in s]
    return [int(x) for x in str(s).split(",") if x.strip()]


def _strs(s):
    if isinstance(s, (list, tuple)):
        return [str(x) for x in s]
    return [x.strip() for x in str(s).split(",") if x.strip()]


_OPT = object()  # marks an optional key without default

# key -> (parser, default); None default means "required unless documented otherwise"
SCHEMAS = {
    "gen": {
        "kind": (str, None),
        "nv": (int, 10), "zeta": (float, 2.0), "d": (int, 9600),
        "n": (int, 15),
        "rows": (int, 7), "cols": (int, 6), "dedup": (_bool, False),
        "train": (str, _OPT), "test": (str, _OPT),
    },
    "sample": {
        "model": (str, None), "sampler": (str, "LSB"),
        "delta": (float, 1.0), "inv_sigma2": (float, 1.0), "m_iters": (int, 100),
        "n_chains": (int, 1000), "beta": (float, 1.0), "sweeps": (int, 100),
        "dt": (float, 1.0), "a0": (float, 1.0), "c0": (float, 1.0),
    },
    "benchmark": {
        "kind": (str, "srbm"), "instances": (int, 10),
        "nv": (int, 10), "nh": (int, 5), "std": (float, _OPT),
        "n": (int, 15), "zeta": (float, 2.0),
        "samplers": (_strs, ["LSB", "cLSB", "aSB", "bSB", "dSB", "Gibbs"]),
        "inv_sigma2_grid": (_floats, [0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.1, 1.2, 1.3,
                                      1.4, 1.5, 1.6, 1.7, 1.8, 1.9, 2.0]),
        "m_iters": (int, 100), "n_chains": (int, 9600), "sweeps": (int, 100),
        "cem_n": (_ints, [1]),
    },
    "estimate-beta": {
        "model": (str, None), "samples": (str, None),
        "methods": (_strs, ["KL", "MLPL"]),
        "condition": (str, _OPT), "cond_means": (str, _OPT),
    },
    "train": {
        "data": (str, None), "algorithm": (str, "sal"), "structure": (str, "SRBM"),
        "nh": (int, 5), "init_model": (str, _OPT), "resume": (str, _OPT),
        "eta": (float, 0.05), "alpha": (float, 0.5), "l2": (float, 1e-5),
        "epochs": (int, 100), "batch_size": (int, _OPT),
        "delta": (float, 1.0), "inv_sigma2": (float, 1.0), "m_iters": (int, 100),
        "n_chains": (int, 9600), "beta_estimator": (str, "cem"),
        "eval_every": (int, 1), "eval_beta": (str, "kl"), "beta_per_batch": (_bool, True),
        "stratify": (_bool, False), "checkpoint_every": (int, 0),
        "cd_k": (int, 100), "cd_visible": (str, "sample"),
        "dmfi_iters": (int, 5), "dmfi_damping": (float, 0.5),
    },
    "eval": {
        "task": (str, None), "model": (str, _OPT), "data": (str, _OPT),
        "beta": (float, _OPT), "bins": (int, 21),
        "rows": (int, 7), "cols": (int, 6), "mask_rows": (int, 5), "mask_cols": (int, 4),
        "delta": (float, 1.0), "inv_sigma2": (float, 1.0), "m_iters": (int, 250),
        "n_chains": (int, 96), "n_classes": (int, 10), "fix": (str, _OPT),
    },
}

TASKS = ("reconstruct", "classify", "overlap", "kl", "generate")


def resolve_config(command, file_cfg, flag_cfg):
    """Merge defaults, config-file values and flags (flags win)."""
    schema = SCHEMAS[command]
    unknown = sorted(set(file_cfg) - set(schema) - {"seed"})
    if unknown:
        raise ConfigError(f"unknown config keys for '{command}': {', '.join(unknown)}")
    out = {}
    for key, (parse, default) in schema.items():
        if key in flag_cfg and flag_cfg[key] is not None:
            raw = flag_cfg[key]
        elif key in file_cfg:
            raw = file_cfg[key]
        elif default is _OPT:
            continue
        elif default is None:
            raise ConfigError(f"'{command}' needs '{key}'")
        else:
            out[key] = default
            continue
        try:
            out[key] = parse(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad value for '{key}': {exc}") from exc
    return out


def config_hash(command, cfg, seed):
    blob = json.dumps({"command": command, "config": cfg, "seed": seed}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class Run:
    """Resolved invocation: command, config, seed, output directory."""

    def __init__(self, command, cfg, seed, out):
        self.command, self.cfg, self.seed, self.out = command, cfg, seed, out
        self.hash = config_hash(command, cfg, seed)
        os.makedirs(out, exist_ok=True)

    @property
    def header(self):
        return [f"salbm {self.command} config_hash={self.hash} seed={self.seed}"]

    def path(self, name):
        return os.path.join(self.out, name)

    def write_rows(self, name, rows, fields):
        with open(self.path(name), "w", newline="") as fh:
            for line in self.header:
                fh.write(f"# {line}\n")
            w = csv.DictWriter(fh, fieldnames=list(fields), extrasaction="ignore")
            w.writeheader()
            w.writerows(rows)
        return self.path(name)

    def write_json(self, name, obj):
        d = {"provenance": {"command": self.command, "config_hash": self.hash,
                            "seed": self.seed}}
        d.update(obj)
        with open(self.path(name), "w") as fh:
            json.dump(d, fh, indent=2)
        return self.path(name)


def _require(cfg, *keys):
    for k in keys:
        if k not in cfg:
            raise ConfigError(f"missing required key '{k}'")


def _lsb(cfg, seed, **extra):
    from .samplers import LsbConfig

    return LsbConfig.from_inverse_variance(cfg["inv_sigma2"], delta=cfg["delta"],
                                           m_iters=cfg["m_iters"], n_chains=cfg["n_chains"],
                                           seed=seed, **extra)


# -- subcommands ----------------------------------------------------------------------------

def cmd_gen(run):
    from . import datasets as ds
    from .model import save_model

    c = run.cfg
    kind = c["kind"]
    if kind == "3spin":
        inst, data = ds.gen_3spin(c["nv"], c["zeta"], c["d"], run.seed)
        inst.to_json(run.path("instance.json"))
        data.to_csv(run.path("data.csv"), run.header)
    elif kind == "sk":
        u = ds.gen_sk(c["n"], c["zeta"], run.seed)
        ds.save_sk(u, run.path("sk.json"), c["zeta"], run.seed)
        save_model(u, run.path("model.json"))
    elif kind == "bas":
        full, train, test = ds.gen_bas(c["rows"], c["cols"], run.seed, c["dedup"])
        full.to_csv(run.path("patterns.csv"), run.header)
        train.to_csv(run.path("train.csv"), run.header)
        test.to_csv(run.path("test.csv"), run.header)
    elif kind == "optdigits":
        _require(c, "train", "test")
        train, test = ds.ingest_optdigits(c["train"], c["test"])
        train.to_csv(run.path("train.csv"), run.header)
        test.to_csv(run.path("test.csv"), run.header)
    else:
        raise ConfigError(f"unknown generator {kind!r}")


def cmd_sample(run):
    from .model import load_model
    from .samplers import SbConfig, exact_sample, gibbs_sample, lsb_sample, sb_sample

    c = run.cfg
    u = load_model(c["model"])
    name = c["sampler"]
    if name == "LSB":
        s = lsb_sample(u, _lsb(c, run.seed))
    elif name == "Gibbs":
        s = gibbs_sample(u, c["beta"], c["sweeps"], c["n_chains"], run.seed)
    elif name == "exact":
        s = exact_sample(u, c["beta"], c["n_chains"], run.seed)
    elif name in ("cLSB", "aSB", "bSB", "dSB"):
        dt = c["delta"] if name == "cLSB" else c["dt"]
        s = sb_sample(u, SbConfig(name, dt=dt, a0=c["a0"], c0=c["c0"], m_iters=c["m_iters"],
                                  n_chains=c["n_chains"], seed=run.seed,
                                  sigma=c["inv_sigma2"] ** -0.5))
    else:
        raise ConfigError(f"unknown sampler {name!r}")
    s.to_csv(run.path("samples.csv"), extra_header=run.header + [f"wall_time={s.wall_time:.6f}"])


def cmd_benchmark(run):
    from . import experiments as ex

    c = run.cfg
    grid = tuple(c["inv_sigma2_grid"])
    if c["kind"] == "srbm":
        rows = ex.srbm_sampler_benchmark(
            c["instances"], c["nv"], c["nh"], c.get("std"), c["m_iters"], c["n_chains"],
            grid, c["sweeps"], run.seed, tuple(c["cem_n"]))
    elif c["kind"] == "sk":
        rows = ex.sk_sampler_benchmark(c["instances"], c["n"], c["zeta"], tuple(c["samplers"]),
                                       c["m_iters"], c["n_chains"], grid, c["sweeps"], run.seed)
    else:
        raise ConfigError(f"unknown benchmark kind {c['kind']!r}")
    fields = list(ex.BENCH_FIELDS) + [f"beta_cem{n}" for n in c["cem_n"] if n > 1]
    run.write_rows("benchmark.csv", rows, fields)
    for name, (mean, se) in ex.summarize(rows).items() if rows else []:
        log.info("%s: mean KL %.4f +- %.4f", name, mean, se)


def cmd_estimate_beta(run):
    from .estimators import cem_estimate, estimate_beta_kl, mlpl_estimate
    from .model import load_model
    from .samplers import SampleSet

    c = run.cfg
    u = load_model(c["model"])
    s = SampleSet.from_csv(c["samples"])
    rows = []
    for m in c["methods"]:
        if m == "KL":
            est = estimate_beta_kl(s, u)
        elif m == "MLPL":
            est = mlpl_estimate(s, u)
        elif m == "CEM":
            _require(c, "condition", "cond_means")
            r = np.array(_ints(c["condition"]))
            est = cem_estimate(np.array(_floats(c["cond_means"])), r, u.W, u.c)
        else:
            raise ConfigError(f"unknown method {m!r}")
        rows.append({"method": est.method, "beta": est.beta,
                     "objective": est.objective_value, "converged": int(est.converged)})
    run.write_rows("beta.csv", rows, ["method", "beta", "objective", "converged"])


def cmd_train(run):
    from .datasets import Dataset
    from .model import load_model, save_model
    from .training import (
        TrainConfig,
        cd_train_rbm,
        dmfi_cd_train_srbm,
        init_params,
        load_checkpoint,
        sal_train,
    )

    c = run.cfg
    data = Dataset.from_csv(c["data"])
    tcfg = TrainConfig(
        eta=c["eta"], alpha=c["alpha"], l2=c["l2"], epochs=c["epochs"],
        batch_size=c.get("batch_size"), lsb=_lsb(c, run.seed), beta_estimator=c["beta_estimator"],
        seed=run.seed, eval_every=c["eval_every"], eval_beta=c["eval_beta"],
        beta_per_batch=c["beta_per_batch"], stratify=c["stratify"],
        checkpoint_every=c["checkpoint_every"], out_dir=run.out)
    resume = None
    if "resume" in c:
        resume = load_checkpoint(c["resume"])
        u0 = resume[0]
    elif "init_model" in c:
        u0 = load_model(c["init_model"])
    else:
        nh = 0 if c["structure"] == "FBM" else c["nh"]
        u0 = init_params(data.n_v, nh, c["structure"], run.seed)
    alg = c["algorithm"]
    if alg == "sal":
        u, hist = sal_train(u0, data, tcfg, resume=resume)
    elif alg == "cd":
        u, hist = cd_train_rbm(u0, data, c["cd_k"], tcfg, c["cd_visible"], resume=resume)
    elif alg == "dmfi":
        u, hist = dmfi_cd_train_srbm(u0, data, c["cd_k"], tcfg, c["dmfi_iters"],
                                     c["dmfi_damping"], resume=resume)
    else:
        raise ConfigError(f"unknown algorithm {alg!r}")
    save_model(u, run.path("model.json"), extra={"provenance": run.header[0]})
    hist.to_csv(run.path("history.csv"), run.header)


def cmd_eval(run):
    from . import datasets as ds
    from . import evaluation as ev
    from .model import load_model

    c = run.cfg
    task = c["task"]
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}; choose from {TASKS}")
    if task != "overlap":
        _require(c, "model")
        u = load_model(c["model"])
    if task != "generate":
        _require(c, "data")
        data = ds.Dataset.from_csv(c["data"])
    if task == "overlap":
        h = ev.overlap_histogram(data, c["bins"], seed=run.seed)
        h.to_csv(run.path("overlap.csv"), run.header)
        return
    if task == "kl":
        beta = c.get("beta", 1.0)
        rep = ev.TaskReport("kl", {"beta": beta, "kl": ev.model_kl(u, beta, data)})
    elif task == "reconstruct":
        mask = ds.central_mask(c["rows"], c["cols"], c["mask_rows"], c["mask_cols"])
        errs = ev.reconstruction_error(u, data, mask, _lsb(c, run.seed))
        rep = ev.TaskReport("reconstruct", {"error_fraction": float(errs.mean()),
                                            "n_images": len(errs)},
                            [{"index": i, "error_fraction": e} for i, e in enumerate(errs)])
    elif task == "classify":
        if data.labels is None:
            raise ValueError("classification data needs labels")
        n_img = data.n_v - c["n_classes"]
        pred = ev.classify_many(u, data.vectors[:, :n_img], _lsb(c, run.seed), c["n_classes"])
        rep = ev.TaskReport("classify", {"accuracy": float(np.mean(pred == data.labels)),
                                         "n_images": len(pred)},
                            [{"index": i, "label": int(t), "predicted": int(p)}
                             for i, (t, p) in enumerate(zip(data.labels, pred))])
    else:
        fixed = {}
        if "fix" in c:
            for tok in _strs(c["fix"]):
                i, val = tok.split("=")
                fixed[int(i)] = int(val)
        s = ev.conditional_generate(u, fixed, _lsb(c, run.seed))
        s.to_csv(run.path("generated.csv"), extra_header=run.header)
        rep = ev.TaskReport("generate", {"n_samples": len(s)})
    rep.to_json(run.path(f"{task}.json"), {"config_hash": run.hash, "seed": run.seed})
    rep.to_csv(run.path(f"{task}.csv"), run.header)


COMMANDS = {
    "gen": cmd_gen,
    "sample": cmd_sample,
    "benchmark": cmd_benchmark,
    "estimate-beta": cmd_estimate_beta,
    "train": cmd_train,
    "eval": cmd_eval,
}


def build_parser():
    p = argparse.ArgumentParser(prog="salbm", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, schema in SCHEMAS.items():
        sp = sub.add_parser(name)
        if name in ("gen", "benchmark", "eval"):
            first = "kind" if name != "eval" else "task"
            sp.add_argument(first, nargs="?", default=None)
        sp.add_argument("--config", help="JSON file with parameters")
        sp.add_argument("--seed", type=int, default=None, help="master seed (u64)")
        sp.add_argument("--out", default=".", help="output directory")
        sp.add_argument("--threads", type=int, default=None, help="worker cap")
        sp.add_argument("-v", "--verbose", action="store_true")
        for key in schema:
            if name in ("gen", "benchmark") and key == "kind" or name == "eval" and key == "task":
                continue
            sp.add_argument("--" + key.replace("_", "-"), dest=key, default=None)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        file_cfg = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    file_cfg = json.load(fh)
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            if not isinstance(file_cfg, dict):
                raise ConfigError("config must be a JSON object")
        flags = {k: v for k, v in vars(args).items()
                 if k in SCHEMAS[args.command] and v is not None}
        cfg = resolve_config(args.command, file_cfg, flags)
        seed = args.seed if args.seed is not None else int(file_cfg.get("seed", 0))
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
    except ConfigError as exc:
        print(f"salbm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads:
        from ._jit import set_threads

        set_threads(args.threads)
    try:
        COMMANDS[args.command](Run(args.command, cfg, seed, args.out))
    except ConfigError as exc:
        print(f"salbm: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError, IndexError, KeyError) as exc:
        print(f"salbm: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
