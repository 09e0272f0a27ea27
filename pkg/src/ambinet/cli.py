"""Command-line entry point: ``ambinet <command> [options]``."""
import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import AmbinetError

log = logging.getLogger("ambinet")

DEFAULTS = {
    "gen-data": {"profile": "desk", "seed": 0, "source_dir": None, "workers": 1, "dataset": {}},
    "design-baseline": {"seed": 0, "order": 1, "beta": 0.01, "out": "baseline"},
    "train": {"profile": "desk", "seed": 0, "steps": 500, "batch": 4, "lr": 2e-4, "out": "runs/train",
              "variants": None, "n_sources": None, "loss": "reim", "plots": False},
    "eval": {"profile": "desk", "seed": 0, "checkpoint": None, "out": "runs/eval", "split": "eval", "beta": 0.01,
             "batch": 4, "plots": False, "variants": None, "n_sources": None},
    "gradcheck": {"tolerance": 1e-3, "seed": 0},
    "selftest": {"seed": 0},
}


class UsageError(AmbinetError):
    pass


def load_config_file(path):
    text = Path(path).read_text()
    if str(path).endswith((".yaml", ".yml")):
        import yaml
        try:
            return yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ValueError(str(e)) from e
    return json.loads(text)


def resolve(command, args):
    """Defaults < config file < explicit command-line flags.

    A config file may hold shared top-level keys plus one section per
    command; keys in a command's own section must be known to it.
    """
    cfg = dict(DEFAULTS[command])
    if args.config:
        try:
            filecfg = load_config_file(args.config)
        except OSError as e:
            raise UsageError(f"cannot read config {args.config}: {e}") from e
        except ValueError as e:
            raise UsageError(f"cannot parse config {args.config}: {e}") from e
        if not isinstance(filecfg, dict):
            raise UsageError(f"{args.config} must hold a mapping")
        shared = {k: v for k, v in filecfg.items() if k not in DEFAULTS and k in cfg}
        section = filecfg.get(command, {})
        unknown = set(section) - set(cfg)
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {sorted(unknown)}")
        cfg.update(shared)
        cfg.update(section)
    for k, v in vars(args).items():
        if k in ("command", "config", "root", "verbose") or v is None:
            continue
        cfg[k] = v
    cfg["root"] = str(Path(args.root).resolve())
    return cfg


def _path(root, p):
    p = Path(p)
    return p if p.is_absolute() else Path(root) / p


def _echo(out, cfg):
    out.mkdir(parents=True, exist_ok=True)
    (out / "run_config.json").write_text(json.dumps(cfg, indent=1, sort_keys=True) + "\n")


def _manifest(root):
    from .dataset import DatasetManifest
    path = Path(root) / "manifest.json"
    if not path.exists():
        raise UsageError(f"no manifest at {path}; run gen-data first")
    return DatasetManifest.load(path)


def cmd_gen_data(cfg):
    from .dataset import DatasetConfig, build_dataset
    try:
        dcfg = DatasetConfig.for_profile(cfg["profile"], source_dir=cfg["source_dir"], workers=cfg["workers"],
                                         **cfg["dataset"])
    except TypeError as e:
        raise UsageError(f"bad dataset override: {e}") from e
    m = build_dataset(cfg["root"], dcfg, cfg["seed"])
    _echo(Path(cfg["root"]), cfg)
    log.info("manifest: %d scenes, %d arrays, %d pairings", len(m.scenes), len(m.arrays), len(m.pairings))


def cmd_design_baseline(cfg):
    from .array import ArrayGeometry
    from .baseline import design_ls_encoder
    m = _manifest(cfg["root"])
    out = _path(cfg["root"], cfg["out"])
    _echo(out, cfg)
    for rec in m.arrays:
        enc = design_ls_encoder(ArrayGeometry.from_record(rec), cfg["order"], cfg["beta"])
        enc.save(out / f"{rec['id']}.enc")
    log.info("designed %d encoders into %s", len(m.arrays), out)


def _n_sources(v):
    return None if v is None else tuple(int(i) for i in v)


def cmd_train(cfg):
    import torch
    from .dataset import BatchLoader
    from .neural import NetworkConfig, TrainConfig, train_loop
    from .neural.train import write_trace
    torch.set_num_threads(1)
    m = _manifest(cfg["root"])
    net = NetworkConfig.desk() if cfg["profile"] == "desk" else NetworkConfig()
    hyper = TrainConfig(lr=cfg["lr"], batch=cfg["batch"], steps=cfg["steps"], seed=cfg["seed"], loss=cfg["loss"])
    loader = BatchLoader(m, cfg["root"], "train", hyper.batch, seed=hyper.seed, variants=cfg["variants"],
                         n_sources=_n_sources(cfg["n_sources"]))
    out = _path(cfg["root"], cfg["out"])
    _echo(out, cfg)
    store, trace = train_loop(loader, net, hyper)
    store.save(out / "checkpoint.npz")
    write_trace(trace, out / "loss.csv")
    if cfg["plots"]:
        from .plotting import plot_loss
        plot_loss(trace, out / "loss.png")
    log.info("trained %d steps, final loss %.6f", len(trace), trace[-1][1])


def cmd_eval(cfg):
    import torch
    from .evaluate import evaluate, write_reports
    from .neural import ParameterStore
    torch.set_num_threads(1)
    m = _manifest(cfg["root"])
    store = None
    if cfg["checkpoint"]:
        ckpt = _path(cfg["root"], cfg["checkpoint"])
        if not ckpt.exists():
            raise UsageError(f"checkpoint {ckpt} not found")
        store = ParameterStore.load(ckpt)
    out = _path(cfg["root"], cfg["out"])
    _echo(out, cfg)
    runs = evaluate(m, cfg["root"], cfg["split"], store, cfg["beta"], cfg["batch"], cfg["variants"],
                    _n_sources(cfg["n_sources"]))
    table = write_reports(runs, out, cfg["plots"])
    for metric, methods in table.items():
        for method, cells in methods.items():
            log.info("%s %s %s", metric, method, {f"{s}_{v}": round(x, 3) for (s, v), x in cells.items()})


def cmd_gradcheck(cfg):
    from .neural.gradcheck import run_suite, swish_analytic_error
    reports = run_suite(cfg["tolerance"], cfg["seed"])
    for r in reports:
        print(r)
    swish_err = swish_analytic_error(cfg["seed"])
    print(f"{'PASS' if swish_err < 1e-6 else 'FAIL'} swish analytic    max rel err {swish_err:.3e} (tol 1e-06)")
    if not all(r.passed for r in reports) or swish_err >= 1e-6:
        raise AmbinetError("gradient check failed")


def cmd_selftest(cfg):
    from .selftest import run_checks
    results = run_checks()
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if not all(ok for _, ok, _ in results):
        raise AmbinetError("self-test failed")


COMMANDS = {
    "gen-data": cmd_gen_data,
    "design-baseline": cmd_design_baseline,
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "selftest": cmd_selftest,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--root", default=".", help="workspace directory all paths are relative to")
    common.add_argument("--config", help="JSON or YAML file with option defaults")
    common.add_argument("--seed", type=int)
    common.add_argument("-v", "--verbose", action="store_true")
    p = argparse.ArgumentParser(prog="ambinet", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", parents=[common], help="simulate the scene/array dataset")
    g.add_argument("--profile", choices=["paper", "desk"])
    g.add_argument("--source-dir", dest="source_dir", help="directory of source WAV files (synthetic if absent)")
    g.add_argument("--workers", type=int)

    d = sub.add_parser("design-baseline", parents=[common], help="least-squares encoder per array")
    d.add_argument("--order", type=int)
    d.add_argument("--beta", type=float)
    d.add_argument("--out")

    t = sub.add_parser("train", parents=[common], help="train the geometry-conditioned network")
    t.add_argument("--profile", choices=["paper", "desk"])
    t.add_argument("--steps", type=int)
    t.add_argument("--batch", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--out")
    t.add_argument("--variants", nargs="+", choices=["dry", "wet"])
    t.add_argument("--n-sources", dest="n_sources", nargs="+", type=int)
    t.add_argument("--loss", choices=["reim", "modulus"])
    t.add_argument("--plots", action="store_true", default=None, help="also render the loss curve")

    e = sub.add_parser("eval", parents=[common], help="evaluate baseline and network, write CSV reports")
    e.add_argument("--profile", choices=["paper", "desk"])
    e.add_argument("--checkpoint")
    e.add_argument("--out")
    e.add_argument("--split", choices=["train", "val", "eval"])
    e.add_argument("--beta", type=float)
    e.add_argument("--batch", type=int)
    e.add_argument("--plots", action="store_true", default=None, help="also render PNG figures")
    e.add_argument("--variants", nargs="+", choices=["dry", "wet"])
    e.add_argument("--n-sources", dest="n_sources", nargs="+", type=int)

    c = sub.add_parser("gradcheck", parents=[common], help="finite-difference check of every layer type")
    c.add_argument("--tolerance", type=float)

    sub.add_parser("selftest", parents=[common], help="quick invariant checks")
    return p


def run(argv=None):
    """Parse ``argv`` and execute; returns the process exit status."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve(args.command, args)
        COMMANDS[args.command](cfg)
    except UsageError as e:
        print(f"ambinet: error: {e}", file=sys.stderr)
        return 2
    except (AmbinetError, OSError, ValueError) as e:
        print(f"ambinet: {args.command} failed: {e}", file=sys.stderr)
        return 1
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
