"""Command-line interface: generate, project, evaluate, stability, sweep-hubs,
plot and heatmap.

Exit codes are 0 on success, 1 on runtime errors and 2 on usage errors.
Every subcommand accepts ``--config FILE`` with flat ``key=value`` lines;
explicit flags take precedence over file values.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time
import warnings

import numpy as np

from . import dataset as ds
from . import embed, metrics, svg
from .embed import EmbedConfig
from .neighbors import build_knn, load_knn_cache, save_knn_cache

LOW_HUB_WARNING = 200


class UsageError(Exception):
    pass


# flag name -> EmbedConfig field
EMBED_FLAGS = {
    "k": ("k", int),
    "hub_num": ("n_h", int),
    "dim": ("d", int),
    "global_epochs": ("e_g", int),
    "local_epochs": ("e_l", int),
    "min_dist": ("min_dist", float),
    "a": ("a", float),
    "b": ("b", float),
    "gamma": ("gamma", float),
    "negative_samples": ("M", int),
    "epsilon": ("epsilon", float),
    "hub_attract_penalty": ("hub_attract_penalty", float),
    "repulse_penalty": ("repulse_penalty", float),
    "init_neighbors": ("m_init", int),
    "lr_global": ("lr_global", float),
    "lr_local": ("lr_local", float),
    "seed": ("seed", int),
    "knn_method": ("knn_method", str),
    "init": ("init", str),
    "init_seed": ("init_seed", int),
}


def _add_embed_flags(p: argparse.ArgumentParser):
    g = p.add_argument_group("embedding parameters")
    for flag, (_, typ) in EMBED_FLAGS.items():
        kwargs = {"type": typ, "default": None}
        if flag == "knn_method":
            kwargs["choices"] = ["auto", "exact", "descent"]
        elif flag == "init":
            kwargs["choices"] = ["pca", "random"]
        g.add_argument("--" + flag.replace("_", "-"), dest=flag, **kwargs)


def read_config_file(path) -> dict:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def explicit_flags(parser: argparse.ArgumentParser, argv: list[str]) -> set[str]:
    """Destinations of options that appear literally on the command line."""
    given = set()
    for action in parser._actions:
        for opt in action.option_strings:
            if any(tok == opt or tok.startswith(opt + "=") for tok in argv):
                given.add(action.dest)
    return given


def merge_config(args: argparse.Namespace, parser: argparse.ArgumentParser,
                 argv: list[str]) -> dict:
    """Effective settings: parser defaults < config file < explicit flags."""
    known = {
        a.dest: a for a in parser._actions
        if a.dest not in ("help", "config", "func") and a.option_strings
    }
    merged = {
        a.dest: getattr(args, a.dest) for a in parser._actions
        if a.dest not in ("help", "config", "func")
    }
    given = explicit_flags(parser, argv)
    if getattr(args, "config", None):
        for key, raw in read_config_file(args.config).items():
            if key not in known:
                raise UsageError(f"unknown config key {key!r}")
            if key in given:
                continue
            action = known[key]
            try:
                if action.type is not None:
                    value = action.type(raw)
                elif action.const is True:
                    value = raw.lower() in ("1", "true", "yes", "on")
                else:
                    value = raw
            except ValueError:
                raise UsageError(f"bad value for {key}: {raw!r}") from None
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"bad value for {key}: {raw!r}")
            merged[key] = value
    return merged


def embed_config(settings: dict) -> EmbedConfig:
    fields = {EMBED_FLAGS[f][0]: v for f, v in settings.items() if f in EMBED_FLAGS and v is not None}
    try:
        return EmbedConfig(**fields)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


# output destinations are left out so identical runs give identical bytes
OUTPUT_KEYS = {"out", "trace_out", "timings_out", "partition_out", "pair_kl_out"}


def header_lines(command: str, settings: dict) -> list[str]:
    lines = [f"command={command}"]
    for key in sorted(settings):
        value = settings[key]
        if value is None or key in OUTPUT_KEYS:
            continue
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        lines.append(f"{key}={value}")
    return lines


def _write_rows(path, rows, comments):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for c in comments:
            fh.write(f"# {c}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerows(rows)


def _configure_threads():
    raw = os.environ.get("UMATO_THREADS", "0")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"UMATO_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise UsageError("UMATO_THREADS must be >= 0")
    if n > 0:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def _embedder(method: str, cfg: EmbedConfig):
    """Function (Dataset, seed, init, init_seed) -> coordinates for stability runs."""

    def run(data, seed=0, init="pca", init_seed=None):
        c = cfg.replace(seed=seed, init=init, init_seed=init_seed)
        if method == "umato":
            return embed.umato(data, c)[0].coords
        if method == "umap-like":
            return embed.umap_like(data, c).coords
        return embed.pca_init(data, c.d).coords

    return run


# --- subcommands ----------------------------------------------------------

def cmd_generate(s: dict) -> int:
    kind, seed = s["kind"], s["seed"] if s["seed"] is not None else 0
    if kind == "swiss":
        data = ds.gen_swiss_roll(s["n"] or 5000, seed)
    elif kind == "scurve":
        data = ds.gen_s_curve(s["n"] or 5000, seed)
    elif kind == "spheres":
        data = ds.gen_spheres(s["n_inner_spheres"], s["n_per_inner"], s["n_outer"],
                              s["sphere_dim"], seed=seed)
    else:
        raise UsageError(f"unknown kind {kind!r}")
    ds.save_csv(data, s["out"], header_lines("generate", s))
    print(f"wrote {data.n} x {data.dim} {kind} dataset to {s['out']}")
    return 0


def cmd_project(s: dict) -> int:
    cfg = embed_config(s)
    data = ds.load_labeled_csv(s["input"])
    if data.n <= cfg.k and s["method"] != "pca":
        raise ds.DataError(f"need more points than neighbors (N={data.n}, k={cfg.k})")
    if s["method"] == "umato" and cfg.n_h < LOW_HUB_WARNING:
        warnings.warn(
            f"hub count {cfg.n_h} is below {LOW_HUB_WARNING}; global structure may be distorted",
            stacklevel=1,
        )
    x = ds.standardize(data)
    comments = header_lines("project", s) + [f"config_digest={cfg.digest()}"]

    knn = None
    if s["knn_cache"] and os.path.exists(s["knn_cache"]):
        knn = load_knn_cache(s["knn_cache"])
        if knn.n != data.n or knn.k != cfg.k:
            raise UsageError("kNN cache does not match the input size or k")
    elif s["knn_cache"] and s["method"] != "pca":
        knn = build_knn(x.points, cfg.k, cfg.knn_method, seed=cfg.seed)
        save_knn_cache(knn, s["knn_cache"])

    trace = embed.OptTrace()
    start = time.perf_counter()
    if s["method"] == "umato":
        proj, partition, trace = embed.umato(x, cfg, knn=knn)
        if s["partition_out"]:
            rows = [("index", "class", "hub_rank")] + partition.to_rows()
            _write_rows(s["partition_out"], rows, comments)
    elif s["method"] == "umap-like":
        proj = embed.umap_like(x, cfg, knn=knn, trace=trace)
        trace.timings["total"] = time.perf_counter() - start
    else:
        proj = embed.pca_init(x, cfg.d)
        trace.timings["init"] = time.perf_counter() - start
    proj.labels = data.labels

    ds.save_csv(proj, s["out"], comments)
    if s["trace_out"]:
        trace.save_csv(s["trace_out"], comments)
    if s["timings_out"]:
        rows = [("stage", "seconds")] + [(k, repr(v)) for k, v in trace.timings.items()]
        _write_rows(s["timings_out"], rows, comments)
    for stage, secs in trace.timings.items():
        print(f"{stage:>9s} {secs:8.3f}s")
    print(f"wrote {proj.n} x {proj.dim} projection to {s['out']}")
    return 0


def _load_pair(s: dict):
    data = ds.load_labeled_csv(s["data"])
    proj = ds.load_projection(s["projection"])
    if proj.n != data.n:
        raise UsageError(f"row mismatch: data has {data.n}, projection has {proj.n}")
    if not s["raw"]:
        data = ds.standardize(data)
        proj = ds.Projection(ds.standardize(ds.Dataset(proj.coords)).points, labels=proj.labels)
    return data, proj


def cmd_evaluate(s: dict) -> int:
    data, proj = _load_pair(s)
    try:
        report = metrics.evaluate(data, proj, s["metrics"], tuple(s["ks"]), tuple(s["sigmas"]))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    comments = header_lines("evaluate", s)
    rows = report.wide_rows() if s["wide"] else report.long_rows()
    _write_rows(s["out"], rows, comments)
    if s["pair_kl_out"]:
        if data.labels is None:
            raise UsageError("--pair-kl-out needs a label column in the data")
        matrix, classes, _ = metrics.class_pair_kl(data, proj, data.labels, s["sigmas"][0])
        rows = [[str(c) for c in classes]] + [[repr(float(v)) for v in row] for row in matrix]
        _write_rows(s["pair_kl_out"], rows, comments)
    for m, p, v in report.scores:
        print(f"{m:>16s} {str(p):>5s} {v:.6f}")
    return 0


def cmd_stability(s: dict) -> int:
    cfg = embed_config(s)
    data = ds.standardize(ds.load_labeled_csv(s["input"]))
    run = _embedder(s["method"], cfg)
    seed = cfg.seed
    rows = [("trial", "rate", "distance")]
    dists = []
    if s["mode"] == "subsample":
        rng = np.random.default_rng(seed)
        full = run(data, seed=seed)
        for t in range(s["trials"]):
            rate = float(rng.uniform(0.10, 0.99))
            d = metrics.stability_subsample(data, run, rate, seed=seed + t, full=full)
            dists.append(d)
            rows.append((t, repr(rate), repr(d)))
    else:
        for t in range(s["trials"]):
            d = metrics.stability_init(data, run, s["random_inits"], seed=seed + t)
            dists.append(d)
            rows.append((t, "", repr(d)))
    rows.append(("summary", "", f"mean={np.mean(dists)!r};min={np.min(dists)!r};max={np.max(dists)!r}"))
    _write_rows(s["out"], rows, header_lines("stability", s))
    print(f"mean Procrustes distance {np.mean(dists):.6f} over {len(dists)} trials")
    return 0


def cmd_sweep_hubs(s: dict) -> int:
    cfg = embed_config(s)
    data = ds.standardize(ds.load_labeled_csv(s["input"]))
    knn = build_knn(data.points, cfg.k, cfg.knn_method, seed=cfg.seed)
    rows = [("hub_num", "f1_tc", "kl")]
    for n_h in s["grid"]:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            proj, _, _ = embed.umato(data, cfg.replace(n_h=n_h), knn=knn)
        y = ds.standardize(ds.Dataset(proj.coords))
        scores = metrics.rank_metrics(data, y, s["rank_k"])
        f1 = metrics.f1(scores["trustworthiness"], scores["continuity"])
        kl = metrics.density_kl(data, y, s["sigma"])
        rows.append((n_h, repr(f1), repr(kl)))
        print(f"hub_num {n_h:5d}  f1_tc {f1:.4f}  kl {kl:.4f}", flush=True)
    _write_rows(s["out"], rows, header_lines("sweep-hubs", s))
    return 0


def cmd_plot(s: dict) -> int:
    proj = ds.load_projection(s["projection"])
    labels = proj.labels if s["color_by_label"] else None
    if s["color_by_label"] and labels is None:
        raise UsageError("--color-by-label needs a label column")
    svg.write_svg(svg.scatter_svg(proj.coords, labels), s["out"])
    return 0


def cmd_heatmap(s: dict) -> int:
    with open(s["matrix"], encoding="utf-8") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#")) if r]
    labels = None
    try:
        [float(v) for v in rows[0]]
    except (ValueError, IndexError):
        if not rows:
            raise ds.DataError(f"{s['matrix']}: empty matrix") from None
        labels, rows = rows[0], rows[1:]
    try:
        matrix = np.array([[float(v) for v in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ds.DataError(f"{s['matrix']}: {exc}") from None
    if matrix.ndim != 2 or len({len(r) for r in rows}) != 1:
        raise ds.DataError(f"{s['matrix']}: ragged matrix")
    svg.write_svg(svg.heatmap_svg(matrix, labels), s["out"])
    return 0


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",")]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",")]


def _grid(text: str) -> list[int]:
    """``20:400:20`` (inclusive) or a comma list."""
    if ":" in text:
        lo, hi, step = (int(v) for v in text.split(":"))
        return list(range(lo, hi + 1, step))
    return _int_list(text)


def build_parser() -> tuple[argparse.ArgumentParser, dict]:
    parser = argparse.ArgumentParser(prog="umato", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    def add(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key=value file; explicit flags take precedence")
        p.set_defaults(func=func)
        subs[name] = p
        return p

    p = add("generate", cmd_generate, "write a synthetic dataset")
    p.add_argument("kind", choices=["swiss", "scurve", "spheres"])
    p.add_argument("--n", type=int, default=None, help="points (swiss/scurve)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n-inner-spheres", type=int, default=10)
    p.add_argument("--n-per-inner", type=int, default=500)
    p.add_argument("--n-outer", type=int, default=5000)
    p.add_argument("--sphere-dim", type=int, default=101)
    p.add_argument("--out", required=True)

    p = add("project", cmd_project, "embed a dataset")
    p.add_argument("input")
    p.add_argument("--method", choices=["umato", "umap-like", "pca"], default="umato")
    p.add_argument("--out", required=True)
    p.add_argument("--trace-out")
    p.add_argument("--timings-out")
    p.add_argument("--partition-out")
    p.add_argument("--knn-cache", help="binary kNN cache; read if present, else written")
    _add_embed_flags(p)

    p = add("evaluate", cmd_evaluate, "score a projection")
    p.add_argument("data")
    p.add_argument("projection")
    p.add_argument("--metrics", type=lambda t: t.split(","), default=None)
    p.add_argument("--ks", type=_int_list, default=[10, 50])
    p.add_argument("--sigmas", type=_float_list, default=[0.1, 1.0])
    p.add_argument("--wide", action="store_true", help="single-row wide CSV")
    p.add_argument("--raw", action="store_true", help="skip standardization")
    p.add_argument("--pair-kl-out", help="class-pair KL matrix CSV (first sigma)")
    p.add_argument("--out", required=True)

    p = add("stability", cmd_stability, "Procrustes stability study")
    p.add_argument("input")
    p.add_argument("--mode", choices=["subsample", "init"], default="subsample")
    p.add_argument("--method", choices=["umato", "umap-like", "pca"], default="umato")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--random-inits", type=int, default=3)
    p.add_argument("--out", required=True)
    _add_embed_flags(p)

    p = add("sweep-hubs", cmd_sweep_hubs, "quality versus hub count")
    p.add_argument("input")
    p.add_argument("--grid", type=_grid, default=_grid("20:400:20"))
    p.add_argument("--rank-k", type=int, default=10)
    p.add_argument("--sigma", type=float, default=0.1)
    p.add_argument("--out", required=True)
    _add_embed_flags(p)

    p = add("plot", cmd_plot, "scatterplot SVG of a projection")
    p.add_argument("projection")
    p.add_argument("--color-by-label", action="store_true")
    p.add_argument("--out", required=True)

    p = add("heatmap", cmd_heatmap, "heatmap SVG of a numeric matrix CSV")
    p.add_argument("matrix")
    p.add_argument("--out", required=True)
    return parser, subs


def _format_warning(message, category, filename, lineno, line=None):
    return f"warning: {message}\n"


def main(argv=None) -> int:
    warnings.formatwarning = _format_warning
    parser, subs = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _configure_threads()
        settings = merge_config(args, subs[args.command], argv)
        if "trials" in settings and settings["trials"] < 1:
            raise UsageError("--trials must be >= 1")
        return args.func(settings)
    except UsageError as exc:
        print(f"umato {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ds.DataError, OSError, ValueError, embed.OptimizationError) as exc:
        print(f"umato {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
