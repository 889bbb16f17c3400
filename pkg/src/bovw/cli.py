"""Command-line pipeline: fit transforms and codebooks, build indices, search,
rerank, expand queries, and evaluate mAP.

Exit codes: 0 success, 1 data/runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Mapping

import numpy as np

from . import codebook as cb
from . import preprocess as pp
from .bow import encode_region, region_for_map
from .errors import (
    ConflictError,
    DataError,
    FitError,
    FormatError,
    ValidationError,
)
from .evaluation import average_precision, load_ground_truth
from .index import InvertedIndex, QuerySpec, RankedList, build_query
from .qe import global_expand, local_expand
from .rerank import (
    DEFAULT_AR_THRESHOLD,
    DEFAULT_QE_TOP_N,
    DEFAULT_TOP_T,
    rerank_top,
    write_localizations,
)
from .synth import gen_random_tensor
from .tensor_io import read_tensor, write_tensor

DEFAULTS = {
    "T": DEFAULT_TOP_T,
    "th": DEFAULT_AR_THRESHOLD,
    "qe_n": DEFAULT_QE_TOP_N,
    "top": 100,
    "upsample": 2,
    "center_prior": pp.DEFAULT_SIGMA_FRACTION,
    "jobs": None,
}

STAGES = ("baseline", "R", "GQE", "R+GQE", "R+LQE")

_SAFE_ID = re.compile(r"^[A-Za-z0-9._-]+$")


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'")
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


def _prior_arg(text: str) -> float | str:
    if text.lower() == "off":
        return "off"
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a float or 'off', got '{text}'")
    if value <= 0:
        raise argparse.ArgumentTypeError("center-prior sigma fraction must be positive")
    return value


def _box_arg(text: str) -> tuple[float, float, float, float]:
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected --box x0,y0,x1,y1")
    try:
        x0, y0, x1, y1 = (float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"malformed box '{text}'")
    if x0 >= x1 or y0 >= y1:
        raise argparse.ArgumentTypeError(f"degenerate box '{text}'")
    return (x0, y0, x1, y1)


def _resolve(args: argparse.Namespace, config: dict, key: str):
    value = getattr(args, key, None)
    if value is not None:
        return value
    if key in config:
        return config[key]
    return DEFAULTS[key]


def _jobs(args, config) -> int:
    value = _resolve(args, config, "jobs")
    if value is None:
        value = os.environ.get("BOVW_JOBS")
    if value is None:
        value = os.cpu_count() or 1
    return max(1, int(value))


def _feature_files(directory: str | Path) -> list[Path]:
    files = sorted(Path(directory).glob("*.lft"))
    if not files:
        raise DataError(f"no .lft files under {directory}")
    return files


def _collect_local_features(files: list[Path]) -> np.ndarray:
    blocks = []
    for path in files:
        tensor = read_tensor(path)
        blocks.append(tensor.data.reshape(tensor.depth, -1).T.astype(np.float64))
    return np.concatenate(blocks, axis=0)


def _subsample(x: np.ndarray, sample: int | None, seed: int) -> np.ndarray:
    if sample is None or sample >= len(x):
        return x
    rng = np.random.default_rng(seed)
    picks = np.sort(rng.choice(len(x), size=sample, replace=False))
    return x[picks]


class MapStore(Mapping):
    """Lazy assignment-map loader keyed by document id."""

    def __init__(self, maps_dir: Path):
        self._dir = Path(maps_dir)
        self._cache: dict[str, cb.AssignmentMap] = {}

    def __getitem__(self, doc_id: str) -> cb.AssignmentMap:
        if doc_id not in self._cache:
            path = self._dir / f"{doc_id}.amp"
            if not path.is_file():
                raise KeyError(doc_id)
            self._cache[doc_id] = cb.load_assignment_map(path)
        return self._cache[doc_id]

    def __iter__(self):
        return (p.stem for p in sorted(self._dir.glob("*.amp")))

    def __len__(self) -> int:
        return sum(1 for _ in self._dir.glob("*.amp"))


def cmd_synth(args, config) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in range(args.count):
        tensor = gen_random_tensor(
            seed=args.seed + i,
            depth=args.depth,
            rows=args.rows,
            cols=args.cols,
            width=args.cols * args.cell,
            height=args.rows * args.cell,
        )
        write_tensor(tensor, out / f"{tensor.image_id}.lft")
    print(f"wrote {args.count} tensors to {out}")
    return 0


def cmd_fit_pca(args, config) -> int:
    files = _feature_files(args.features)
    features = _collect_local_features(files)
    features = _subsample(features, args.sample, args.seed)
    features = pp.l2_normalize_rows(features)
    model = pp.fit_transform_model(features, output_dim=args.dim, epsilon=args.epsilon)
    pp.save_transform_model(model, args.out)
    retained = model.eigenvalues.sum() / model.total_variance if model.total_variance else 1.0
    print(
        f"fitted {model.input_dim} -> {model.output_dim} dims on {len(features)} features, "
        f"retained variance {100.0 * retained:.1f}%"
    )
    return 0


def cmd_fit_codebook(args, config) -> int:
    files = _feature_files(args.features)
    model = pp.load_transform_model(args.pca)
    features = _collect_local_features(files)
    features = _subsample(features, args.sample, args.seed)
    if len(features) < args.k:
        raise FitError(f"sample of {len(features)} features cannot support k={args.k}")
    transformed = pp.transform_features(model, features)
    book = cb.fit_codebook(transformed, k=args.k, seed=args.seed, max_iters=args.max_iters)
    cb.save_codebook(book, args.out)
    print(
        f"fitted {book.size} words on {len(transformed)} features, "
        f"quantization error {book.quantization_error:.6f}"
    )
    return 0


def cmd_index(args, config) -> int:
    upsample = int(_resolve(args, config, "upsample"))
    prior_sigma = _resolve(args, config, "center_prior")
    if prior_sigma in ("off", None):
        prior_sigma = None
    else:
        prior_sigma = float(prior_sigma)
    files = _feature_files(args.features)
    model = pp.load_transform_model(args.pca)
    book = cb.load_codebook(args.codebook)

    out = Path(args.out)
    maps_dir = out / "maps"
    maps_dir.mkdir(parents=True, exist_ok=True)

    def build(path: Path):
        try:
            tensor = read_tensor(path)
            if not _SAFE_ID.match(tensor.image_id):
                raise ValidationError(
                    f"image id '{tensor.image_id}' is not filename-safe"
                )
            return cb.build_assignment_map(book, tensor, model, upsample)
        except (ValidationError, FormatError, OSError) as exc:
            print(f"warning: skipping {path.name}: {exc}", file=sys.stderr)
            return None

    jobs = _jobs(args, config)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            built = list(pool.map(build, files))
    else:
        built = [build(path) for path in files]

    index = InvertedIndex(book.size)
    priors: dict[tuple[int, int], pp.CenterPriorGrid] = {}
    skipped = 0
    for amap in built:
        if amap is None:
            skipped += 1
            continue
        prior = None
        if prior_sigma is not None:
            key = (amap.rows, amap.cols)
            if key not in priors:
                priors[key] = pp.center_prior_grid(amap.rows, amap.cols, prior_sigma)
            prior = priors[key]
        bow = encode_region(amap, region_for_map(amap), book.size, prior)
        index.add_document(amap.image_id, bow)
        cb.save_assignment_map(amap, maps_dir / f"{amap.image_id}.amp")

    if not index.doc_count:
        raise DataError("no documents survived indexing")
    index.save(out / "index.idx")
    manifest = {
        "vocab_size": book.size,
        "upsample": upsample,
        "center_prior": prior_sigma,
        "pca": str(Path(args.pca).resolve()),
        "codebook": str(Path(args.codebook).resolve()),
    }
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(
        f"indexed {index.doc_count} documents, {index.nnz} nonzero entries, "
        f"skipped {skipped}"
    )
    return 0


def _write_ranking(path: str | Path, ranking: RankedList, limit: int) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rank, (doc_id, score) in enumerate(ranking.items[:limit], start=1):
            fh.write(f"{rank}\t{doc_id}\t{score:.6f}\n")


def cmd_search(args, config) -> int:
    index_dir = Path(args.index)
    manifest_path = index_dir / "manifest.json"
    if not manifest_path.is_file():
        raise DataError(f"missing index manifest {manifest_path}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    for key in ("pca", "codebook", "upsample"):
        if key not in manifest:
            raise DataError(f"index manifest lacks '{key}'")

    model = pp.load_transform_model(manifest["pca"])
    book = cb.load_codebook(manifest["codebook"])
    index = InvertedIndex.load(index_dir / "index.idx")
    maps = MapStore(index_dir / "maps")

    tensor = read_tensor(args.query)
    amap = cb.build_assignment_map(book, tensor, model, int(manifest["upsample"]))
    spec = QuerySpec(query_id=tensor.image_id, amap=amap, box=args.box)
    query_bow = build_query(spec, book.size)

    top_t = int(_resolve(args, config, "T"))
    th = float(_resolve(args, config, "th"))
    qe_n = int(_resolve(args, config, "qe_n"))
    limit = int(_resolve(args, config, "top"))

    ranking = index.search(query_bow, max(index.doc_count, 1), query_id=spec.query_id)
    locs = None
    if "R" in args.stages.split("+"):
        ranking, locs = rerank_top(ranking, spec, maps, book.size, top_t, th)
    if args.stages.endswith("GQE") and qe_n > 0:
        bows = index.document_vectors(
            [d for d, _ in ranking.items[: min(qe_n, len(ranking.items))]]
        )
        expanded = global_expand(query_bow, ranking, bows, qe_n)
        ranking = index.search(expanded, max(index.doc_count, 1), query_id=spec.query_id)
    elif args.stages.endswith("LQE") and qe_n > 0:
        expanded = local_expand(query_bow, locs, maps, qe_n, book.size)
        ranking = index.search(expanded, max(index.doc_count, 1), query_id=spec.query_id)

    _write_ranking(args.out, ranking, limit)
    if locs is not None:
        write_localizations(str(args.out) + ".loc", spec.query_id, locs)
    print(f"{spec.query_id}: {min(len(ranking.items), limit)} results -> {args.out}")
    return 0


def _read_ranking(path: Path) -> RankedList:
    items = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise FormatError(f"{path}:{lineno}: expected rank, doc, score")
            try:
                items.append((parts[1], float(parts[2])))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad score '{parts[2]}'") from None
    return RankedList(query_id=path.stem, items=items)


def cmd_eval(args, config) -> int:
    gts = load_ground_truth(args.gt)
    files = sorted(
        p for p in Path(args.rankings).iterdir()
        if p.is_file() and p.suffix != ".loc"
    )
    if not files:
        raise DataError(f"no ranking files under {args.rankings}")
    aps = []
    for path in files:
        ranking = _read_ranking(path)
        gt = gts.get(ranking.query_id)
        if gt is None:
            raise DataError(f"no ground truth for query '{ranking.query_id}'")
        ap = average_precision(ranking, gt)
        aps.append(ap)
        print(f"{ranking.query_id}\tAP={ap:.4f}")
    print(f"mAP\t{sum(aps) / len(aps):.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bovw",
        description="Bag-of-visual-words instance search over local-feature tensors.",
    )
    parser.add_argument("--config", help="JSON file with default option values")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic .lft corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=_positive_int, default=50)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--depth", type=_positive_int, default=16)
    p.add_argument("--rows", type=_positive_int, default=8)
    p.add_argument("--cols", type=_positive_int, default=8)
    p.add_argument("--cell", type=_positive_int, default=16, help="pixels per map cell")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit-pca", help="fit the L2-PCA-whiten-L2 transform")
    p.add_argument("--features", required=True, help="directory of .lft files")
    p.add_argument("--out", required=True)
    p.add_argument("--dim", type=_positive_int, default=None,
                   help="output dims (default: input dims)")
    p.add_argument("--epsilon", type=float, default=pp.DEFAULT_EPSILON)
    p.add_argument("--sample", type=_positive_int, default=None,
                   help="cap on training features")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_fit_pca)

    p = sub.add_parser("fit-codebook", help="fit the k-means visual codebook")
    p.add_argument("--features", required=True)
    p.add_argument("--pca", required=True)
    p.add_argument("--k", type=_positive_int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample", type=_positive_int, default=None)
    p.add_argument("--max-iters", type=_positive_int, default=100)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit_codebook)

    p = sub.add_parser("index", help="build assignment maps and the inverted index")
    p.add_argument("--features", required=True)
    p.add_argument("--pca", required=True)
    p.add_argument("--codebook", required=True)
    p.add_argument("--upsample", type=_positive_int, default=None)
    p.add_argument("--center-prior", dest="center_prior", type=_prior_arg, default=None,
                   help="sigma fraction, or 'off'")
    p.add_argument("--jobs", type=_positive_int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="run a query through the staged pipeline")
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True, help=".lft tensor of the query image")
    p.add_argument("--box", type=_box_arg, default=None,
                   help="x0,y0,x1,y1 pixel box (enables local search)")
    p.add_argument("--stages", choices=STAGES, default="baseline")
    p.add_argument("--T", dest="T", type=_positive_int, default=None,
                   help="rerank depth")
    p.add_argument("--th", type=float, default=None, help="aspect-ratio threshold")
    p.add_argument("--qe-n", dest="qe_n", type=_nonneg_int, default=None,
                   help="query-expansion depth")
    p.add_argument("--top", type=_positive_int, default=None,
                   help="results to emit")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="mAP of ranking files against ground truth")
    p.add_argument("--rankings", required=True, help="directory of ranking files")
    p.add_argument("--gt", required=True, help="query<TAB>doc<TAB>pos|ignore lines")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = {}
    if args.config:
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                config = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: cannot read config: {exc}", file=sys.stderr)
            return 1
    try:
        return args.func(args, config)
    except (ValidationError, FormatError, FitError, DataError, ConflictError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
