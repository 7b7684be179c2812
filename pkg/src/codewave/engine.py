"""End-to-end orchestration: train on an index, classify a test index,
threshold the results into warnings, and tally precision statistics.

A PipelineConfig pins every knob of a run and canonicalizes to the flag
string used in reports and result tables (e.g. "-cweid -nopreprep -raw -fft
-cheb"), so a table row can always be replayed as a command line.
"""

from __future__ import annotations

import hashlib
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Iterable, Optional, Union

from . import nlp
from .classify import METRICS, ResultSet, TrainingSet
from .classify import classify as classify_vector
from .classify import train as train_clusters
from .errors import ConfigError
from .features import FeatureVector, extract_fft, extract_lpc, extract_minmax
from .index import TestCaseIndex, WeaknessClass
from .loader import Signal, samples_from_bytes
from .preprocess import FilterSpec, preprocess, wavelet

NGRAM_FLAGS = {1: "-unigram", 2: "-bigram", 3: "-trigram"}
FLAG_NGRAMS = {v: k for k, v in NGRAM_FLAGS.items()}
SMOOTHING_FLAGS = {"mle": "-mle", "add_delta": "-add-delta",
                   "witten_bell": "-witten-bell"}
FLAG_SMOOTHINGS = {v: k for k, v in SMOOTHING_FLAGS.items()}

ModelType = Union[TrainingSet, dict[WeaknessClass, nlp.NGramModel]]


@dataclass(frozen=True)
class PipelineConfig:
    class_kind: str = "cve"          # cve | cwe ("-cweid")
    pipeline: str = "signal"         # signal | nlp
    loader_ngram: int = 2            # byte window of the signal loader
    filter_kind: str = "raw"         # raw | norm | low | sdwt
    cutoff_fraction: float = 0.25
    wavelet_name: str = "haar"
    sdwt_levels: int = 1
    extractor: str = "fft"           # fft | lpc | minmax
    fft_window: int = 1024
    fft_bins: int = 512
    lpc_order: int = 20
    minmax_d: int = 4
    metric: str = "cheb"             # eucl | cheb | mink | cos | hamming | diff
    mink_p: float = 3.0
    tolerance: float = 1e-4          # hamming / diff threshold
    cluster_kind: str = "mean"       # mean | median
    nlp_n: int = 1
    smoothing: str = "add_delta"     # mle | add_delta | witten_bell
    delta: float = 1.0
    vocab_size: int = 256
    threshold: float = math.inf      # accept a warning when top-1 score <= this
    flucid: bool = False
    spectrogram: bool = False
    graph: bool = False

    def __post_init__(self):
        if self.class_kind not in ("cve", "cwe"):
            raise ConfigError(f"unknown class kind {self.class_kind!r}")
        if self.pipeline not in ("signal", "nlp"):
            raise ConfigError(f"unknown pipeline {self.pipeline!r}")
        if self.loader_ngram not in (1, 2, 3) or self.nlp_n not in (1, 2, 3):
            raise ConfigError("n-gram sizes must be 1, 2 or 3")
        if self.filter_kind not in ("raw", "norm", "low", "sdwt"):
            raise ConfigError(f"unknown preprocessing {self.filter_kind!r}")
        if self.extractor not in ("fft", "lpc", "minmax"):
            raise ConfigError(f"unknown extractor {self.extractor!r}")
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")
        if self.smoothing not in nlp.SMOOTHINGS:
            raise ConfigError(f"unknown smoothing {self.smoothing!r}")
        if self.cluster_kind not in ("mean", "median"):
            raise ConfigError(f"unknown cluster kind {self.cluster_kind!r}")
        if self.threshold < 0:
            raise ConfigError("threshold must be >= 0")

    @property
    def option_string(self) -> str:
        """Canonical flag form; defaults are omitted, parameters attach
        to their flag with '=' (e.g. -mink=4)."""
        tokens = []
        if self.class_kind == "cwe":
            tokens.append("-cweid")
        tokens.append("-nopreprep")
        if self.pipeline == "signal":
            if self.loader_ngram != 2:
                tokens.append(NGRAM_FLAGS[self.loader_ngram])
            tokens.append(self._prep_token())
            tokens.append(self._extractor_token())
            tokens.append(self._metric_token())
            if self.cluster_kind == "median":
                tokens.append("-median")
        else:
            tokens.append("-char")
            tokens.append(NGRAM_FLAGS[self.nlp_n])
            tokens.append(self._smoothing_token())
        if math.isfinite(self.threshold):
            tokens.append(f"-threshold={self.threshold:g}")
        for flag, enabled in (("-flucid", self.flucid),
                              ("-spectrogram", self.spectrogram),
                              ("-graph", self.graph)):
            if enabled:
                tokens.append(flag)
        return " ".join(tokens)

    def _prep_token(self) -> str:
        if self.filter_kind == "low":
            return "-low" if self.cutoff_fraction == 0.25 else \
                f"-low={self.cutoff_fraction:g}"
        if self.filter_kind == "sdwt":
            if self.wavelet_name == "haar" and self.sdwt_levels == 1:
                return "-sdwt"
            return f"-sdwt={self.wavelet_name}:{self.sdwt_levels}"
        return f"-{self.filter_kind}"

    def _extractor_token(self) -> str:
        if self.extractor == "fft":
            if (self.fft_window, self.fft_bins) == (1024, 512):
                return "-fft"
            return f"-fft={self.fft_window}:{self.fft_bins}"
        if self.extractor == "lpc":
            return "-lpc" if self.lpc_order == 20 else f"-lpc={self.lpc_order}"
        return "-minmax" if self.minmax_d == 4 else f"-minmax={self.minmax_d}"

    def _metric_token(self) -> str:
        if self.metric == "mink" and self.mink_p != 3.0:
            return f"-mink={self.mink_p:g}"
        if self.metric in ("hamming", "diff") and self.tolerance != 1e-4:
            return f"-{self.metric}={self.tolerance:g}"
        return f"-{self.metric}"

    def _smoothing_token(self) -> str:
        if self.smoothing == "add_delta" and self.delta != 1.0:
            return f"-add-delta={self.delta:g}"
        return SMOOTHING_FLAGS[self.smoothing]

    @property
    def config_hash(self) -> str:
        """Fingerprint of the loader/preprocess/extractor settings.

        Stored inside persisted models to stop mixed-pipeline comparisons.
        Test-time choices (metric, threshold, smoothing estimator, output
        flags) are deliberately excluded: centroids are metric-agnostic and
        n-gram counts are smoothing-agnostic, so one trained model serves
        every compatible test configuration.
        """
        if self.pipeline == "signal":
            parts = ["signal", self.class_kind, str(self.loader_ngram),
                     self._prep_token(), self._extractor_token()]
        else:
            parts = ["nlp", self.class_kind, str(self.nlp_n),
                     f"V={self.vocab_size}"]
        return hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()[:16]

    def filter_spec(self) -> FilterSpec:
        kind = {"low": "fft_low"}.get(self.filter_kind, self.filter_kind)
        if kind == "sdwt":
            return FilterSpec(kind="sdwt", wavelet=wavelet(self.wavelet_name),
                              levels=self.sdwt_levels)
        return FilterSpec(kind=kind, cutoff_fraction=self.cutoff_fraction)

    def smoothing_spec(self) -> nlp.SmoothingSpec:
        return nlp.SmoothingSpec(self.smoothing, self.delta)


def parse_option_tokens(tokens: Iterable[str]) -> PipelineConfig:
    """Parse a flag list (option-string form) back into a PipelineConfig.

    Accepts the single-dash spellings used in result tables plus double-dash
    synonyms; parameters ride on the flag after '='. Conflicting choices in
    the same category are rejected rather than last-one-wins so a typo in a
    sweep grid cannot silently change the run.
    """
    fields: dict = {}
    seen: dict[str, str] = {}  # category -> flag that set it

    def settle(category: str, flag: str, **values):
        if category in seen:
            raise ConfigError(
                f"conflicting flags: {seen[category]} and {flag} both set "
                f"the {category}")
        seen[category] = flag
        fields.update(values)

    ngram_value: Optional[tuple[str, int]] = None
    for raw in tokens:
        flag = raw[1:] if raw.startswith("--") else raw
        name, _, param = flag.partition("=")
        if name == "-nopreprep":
            continue
        if name == "-cweid":
            settle("class kind", name, class_kind="cwe")
        elif name in FLAG_NGRAMS:
            if ngram_value is not None:
                raise ConfigError(
                    f"conflicting flags: {ngram_value[0]} and {name} both set "
                    f"the n-gram size")
            ngram_value = (name, FLAG_NGRAMS[name])
        elif name in ("-raw", "-norm"):
            settle("preprocessing", name, filter_kind=name[1:])
        elif name == "-low":
            values = {"filter_kind": "low"}
            if param:
                values["cutoff_fraction"] = float(param)
            settle("preprocessing", name, **values)
        elif name == "-sdwt":
            values = {"filter_kind": "sdwt"}
            if param:
                wavelet_name, _, levels = param.partition(":")
                values["wavelet_name"] = wavelet_name
                if levels:
                    values["sdwt_levels"] = int(levels)
            settle("preprocessing", name, **values)
        elif name == "-fft":
            values = {"extractor": "fft"}
            if param:
                window, _, bins = param.partition(":")
                values["fft_window"] = int(window)
                values["fft_bins"] = int(bins) if bins else int(window) // 2
            settle("extractor", name, **values)
        elif name == "-lpc":
            values = {"extractor": "lpc"}
            if param:
                values["lpc_order"] = int(param)
            settle("extractor", name, **values)
        elif name == "-minmax":
            values = {"extractor": "minmax"}
            if param:
                values["minmax_d"] = int(param)
            settle("extractor", name, **values)
        elif name in ("-eucl", "-cheb", "-cos"):
            settle("metric", name, metric=name[1:])
        elif name == "-mink":
            values = {"metric": "mink"}
            if param:
                values["mink_p"] = float(param)
            settle("metric", name, **values)
        elif name in ("-hamming", "-diff"):
            values = {"metric": name[1:]}
            if param:
                values["tolerance"] = float(param)
            settle("metric", name, **values)
        elif name == "-median":
            settle("cluster kind", name, cluster_kind="median")
        elif name == "-char":
            fields["pipeline"] = "nlp"
        elif name in FLAG_SMOOTHINGS:
            values = {"smoothing": FLAG_SMOOTHINGS[name]}
            if name == "-add-delta" and param:
                values["delta"] = float(param)
            settle("smoothing", name, **values)
        elif name == "-threshold":
            fields["threshold"] = float(param)
        elif name == "-flucid":
            fields["flucid"] = True
        elif name == "-spectrogram":
            fields["spectrogram"] = True
        elif name == "-graph":
            fields["graph"] = True
        else:
            raise ConfigError(f"unknown option {raw!r}")

    nlp_flags = {"smoothing"} & set(seen)
    signal_flags = {"preprocessing", "extractor", "metric", "cluster kind"} & set(seen)
    if fields.get("pipeline") == "nlp" or nlp_flags:
        if signal_flags:
            raise ConfigError(
                "conflicting flags: cannot mix the NLP pipeline "
                f"({seen.get('smoothing', '-char')}) with signal flags "
                f"({', '.join(sorted(seen[c] for c in signal_flags))})")
        fields["pipeline"] = "nlp"
        if ngram_value is not None:
            fields["nlp_n"] = ngram_value[1]
    else:
        fields["pipeline"] = "signal"
        if ngram_value is not None:
            fields["loader_ngram"] = ngram_value[1]
    return PipelineConfig(**fields)


def parse_option_string(option_string: str) -> PipelineConfig:
    return parse_option_tokens(option_string.split())


# --- per-file classification --------------------------------------------------

def feature_vector(cfg: PipelineConfig, data: bytes, source: str = "") -> FeatureVector:
    """Run the signal pipeline on raw bytes: load, preprocess, extract."""
    sig = Signal(samples_from_bytes(data, cfg.loader_ngram), source=source,
                 ngram=cfg.loader_ngram)
    sig = preprocess(sig, cfg.filter_spec())
    if cfg.extractor == "fft":
        return extract_fft(sig, cfg.fft_window, cfg.fft_bins)
    if cfg.extractor == "lpc":
        return extract_lpc(sig, cfg.lpc_order)
    return extract_minmax(sig, cfg.minmax_d)


def classify_bytes(data: bytes, model: ModelType, cfg: PipelineConfig,
                   source: str = "") -> ResultSet:
    """Produce the ranked class list for one file's content."""
    if cfg.pipeline == "signal":
        if not isinstance(model, TrainingSet):
            raise ConfigError("signal pipeline needs a TrainingSet model")
        fv = feature_vector(cfg, data, source)
        return classify_vector(fv, model, cfg.metric, cfg.mink_p, cfg.tolerance)
    if not isinstance(model, dict):
        raise ConfigError("nlp pipeline needs per-class n-gram models")
    return nlp.rank_models(data, model, cfg.smoothing_spec())


# --- warnings and statistics ---------------------------------------------------

@dataclass(frozen=True)
class ScanWarning:
    """An accepted classification: this file looks like that weakness."""

    path: str
    weakness: WeaknessClass
    score: float
    rank: int = 1
    second_guess: Optional[WeaknessClass] = None
    config: str = ""

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if not math.isfinite(self.score):
            raise ValueError("warning score must be finite")


def warning_from_result(path: str, result: ResultSet,
                        cfg: PipelineConfig) -> Optional[ScanWarning]:
    """Apply the accept threshold to a ranked result; None means rejected."""
    if not result.ranked:
        return None
    top, score = result.ranked[0]
    if score > cfg.threshold or not math.isfinite(score):
        return None
    second = result.ranked[1][0] if len(result.ranked) > 1 else None
    return ScanWarning(path=path, weakness=top, score=score, rank=1,
                       second_guess=second, config=cfg.option_string)


def precision_pct(good: int, bad: int) -> Decimal:
    """Exact percentage, half-up at two decimals; empty tallies print 0.00."""
    if good + bad == 0:
        return Decimal("0.00")
    return (Decimal(100 * good) / Decimal(good + bad)).quantize(
        Decimal("0.01"), rounding=ROUND_HALF_UP)


@dataclass
class StatsRow:
    key: str  # option string (per-config rows) or class id (per-class rows)
    good: int = 0
    bad: int = 0

    @property
    def pct(self) -> Decimal:
        return precision_pct(self.good, self.bad)


@dataclass
class RunStats:
    guess: str  # first | second
    per_config: list[StatsRow] = field(default_factory=list)
    per_class: list[StatsRow] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)


def check_recall(rows: Iterable[StatsRow], expected_total: int) -> list[str]:
    """Flag per-config rows whose tallies cannot cover the evaluated files.

    good + bad short of the class-bearing file count means results went
    missing between classification and scoring (the kind of bookkeeping bug
    that shows up as a 2+0-out-of-9 row in a results table).
    """
    problems = []
    for row in rows:
        if row.good + row.bad < expected_total:
            problems.append(
                f"recall shortfall for {row.key!r}: good+bad = "
                f"{row.good + row.bad} < {expected_total} evaluated files")
    return problems


def score_stats(warnings: list[ScanWarning], truth: TestCaseIndex,
                cfg: PipelineConfig) -> tuple[RunStats, RunStats]:
    """Tally first-guess and second-guess precision against ground truth.

    A first guess is good when the top class is among the file's true
    classes; the second-guess tally also accepts the runner-up, and a
    correct first guess counts in both. Per-class rows credit or debit the
    predicted class; classes never predicted keep an all-zero row (that is
    how a class that fell out of training shows up as 0.00).
    """
    truth_map: dict[str, set[WeaknessClass]] = {}
    for entry in truth.entries:
        wanted = {wc for wc in entry.class_set() if wc.kind == cfg.class_kind}
        if wanted:
            truth_map[entry.path] = wanted
    expected_total = len(truth_map)

    first = RunStats("first")
    second = RunStats("second")
    class_rows_first: dict[str, StatsRow] = {}
    class_rows_second: dict[str, StatsRow] = {}
    for wc in sorted({w for s in truth_map.values() for w in s},
                     key=lambda w: w.id):
        class_rows_first[wc.id] = StatsRow(wc.id)
        class_rows_second[wc.id] = StatsRow(wc.id)

    def row(rows: dict[str, StatsRow], wc: WeaknessClass) -> StatsRow:
        return rows.setdefault(wc.id, StatsRow(wc.id))

    config_first = StatsRow(cfg.option_string)
    config_second = StatsRow(cfg.option_string)
    excluded = 0
    for warning in warnings:
        true_classes = truth_map.get(warning.path)
        if true_classes is None:
            excluded += 1
            continue
        top_hit = warning.weakness in true_classes
        if top_hit:
            config_first.good += 1
            row(class_rows_first, warning.weakness).good += 1
        else:
            config_first.bad += 1
            row(class_rows_first, warning.weakness).bad += 1
        if top_hit:
            config_second.good += 1
            row(class_rows_second, warning.weakness).good += 1
        elif warning.second_guess is not None and warning.second_guess in true_classes:
            config_second.good += 1
            row(class_rows_second, warning.second_guess).good += 1
        else:
            config_second.bad += 1
            row(class_rows_second, warning.weakness).bad += 1

    for stats, config_row, class_rows in (
        (first, config_first, class_rows_first),
        (second, config_second, class_rows_second),
    ):
        stats.per_config.append(config_row)
        stats.per_class.extend(
            sorted(class_rows.values(),
                   key=lambda r: (-r.pct, r.key)))
        if excluded:
            stats.diagnostics.append(
                f"{excluded} warning(s) excluded: path missing from ground truth")
        stats.diagnostics.extend(check_recall([config_row], expected_total))
    return first, second


# --- training and testing ------------------------------------------------------

def _read(root, path: str) -> bytes:
    return (Path(root) / path).read_bytes()


def _entry_classes(entry, class_kind: str) -> list[WeaknessClass]:
    return sorted((wc for wc in entry.class_set() if wc.kind == class_kind),
                  key=lambda w: w.id)


def _vector_chunk(args) -> list[tuple[int, FeatureVector]]:
    cfg, blobs, chunk = args
    return [(pos, feature_vector(cfg, blobs[path], path))
            for pos, path in chunk]


def _chunks(items: list, jobs: int) -> list[list]:
    size = -(-len(items) // jobs)
    return [items[i: i + size] for i in range(0, len(items), size)]


def _effective_jobs(jobs: int) -> int:
    # forking past the core count only adds contention
    return max(1, min(jobs, os.cpu_count() or 1))


def _load_blobs(root, paths, blobs: Optional[dict[str, bytes]] = None,
                ) -> dict[str, bytes]:
    """Read file contents with a single reader.

    Concurrent readers gain nothing (the kernel page cache already makes
    repeat reads cheap, and many filesystems serialize the metadata work
    anyway), so parallel runs slurp bytes up front and fork compute-only
    children that inherit this map copy-on-write.
    """
    out = blobs if blobs is not None else {}
    for path in paths:
        if path not in out:
            out[path] = _read(root, path)
    return out


def _fork_map(fn, payloads: list) -> list:
    """Fork one child per payload; children inherit inputs by copy-on-write
    and send only pickled results back through a pipe.

    Much lighter than a process pool for a handful of one-shot chunks: no
    manager threads competing for cores and nothing serialized on the way
    in. Caller must be on a platform with os.fork (everywhere but Windows).
    """
    import pickle

    children = []
    for payload in payloads:
        read_fd, write_fd = os.pipe()
        pid = os.fork()
        if pid == 0:  # child
            os.close(read_fd)
            try:
                blob = pickle.dumps(("ok", fn(payload)),
                                    protocol=pickle.HIGHEST_PROTOCOL)
            except BaseException as exc:  # noqa: BLE001 - crossing a process
                try:
                    blob = pickle.dumps(("exc", exc))
                except Exception:
                    blob = pickle.dumps(("exc", RuntimeError(repr(exc))))
            try:
                with os.fdopen(write_fd, "wb") as sink:
                    sink.write(blob)
            finally:
                os._exit(0)
        os.close(write_fd)
        children.append((pid, read_fd))
    results = []
    failure = None
    for pid, read_fd in children:
        with os.fdopen(read_fd, "rb") as source:
            blob = source.read()
        os.waitpid(pid, 0)
        if not blob:
            failure = failure or RuntimeError(
                "parallel worker died without a result")
            continue
        status, value = pickle.loads(blob)
        if status != "ok":
            failure = failure or value
            continue
        results.append(value)
    if failure is not None:
        raise failure
    return results


def _map_chunked(fn, payloads: list, jobs: int) -> list:
    """Run chunk payloads in parallel; fork-join where available."""
    if hasattr(os, "fork"):
        return _fork_map(fn, payloads)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, payloads))


def train_case(index: TestCaseIndex, cfg: PipelineConfig, root,
               jobs: int = 1, blobs: Optional[dict[str, bytes]] = None,
               ) -> ModelType:
    """Learn one model per weakness class from an annotated train index.

    A file annotated with several classes contributes its whole content to
    each of them; there is no fragment-level attribution. With jobs > 1 the
    corpus is preloaded and feature extraction forks across cores; results
    are identical either way.
    """
    if index.mode != "train":
        raise ConfigError("training requires a train-mode index")
    if cfg.pipeline == "nlp":
        models: dict[WeaknessClass, nlp.NGramModel] = {}
        for entry in index.entries:
            classes = _entry_classes(entry, cfg.class_kind)
            if not classes:
                continue
            data = blobs[entry.path] if blobs else _read(root, entry.path)
            for wc in classes:
                model = models.get(wc)
                if model is None:
                    model = models[wc] = nlp.NGramModel(
                        n=cfg.nlp_n, label=wc, vocab_size=cfg.vocab_size)
                model.update(data)
        if not models:
            raise ConfigError(
                f"no {cfg.class_kind} classes found in the training index")
        return models

    jobs = _effective_jobs(jobs)
    tasks = [(pos, entry.path) for pos, entry in enumerate(index.entries)
             if _entry_classes(entry, cfg.class_kind)]
    vectors_by_pos: dict[int, FeatureVector] = {}
    if jobs == 1 or len(tasks) < 2 * jobs:
        for pos, path in tasks:
            data = blobs[path] if blobs else _read(root, path)
            vectors_by_pos[pos] = feature_vector(cfg, data, path)
    else:
        blobs = _load_blobs(root, (path for _, path in tasks), blobs)
        payloads = [(cfg, blobs, chunk) for chunk in _chunks(tasks, jobs)]
        for result in _map_chunked(_vector_chunk, payloads, jobs):
            for pos, fv in result:
                vectors_by_pos[pos] = fv
    labeled = []
    for pos, entry in enumerate(index.entries):
        if pos not in vectors_by_pos:
            continue
        for wc in _entry_classes(entry, cfg.class_kind):
            labeled.append((wc, vectors_by_pos[pos]))
    if not labeled:
        raise ConfigError(
            f"no {cfg.class_kind} classes found in the training index")
    return train_clusters(labeled, cfg.cluster_kind, cfg.config_hash)


def _classify_chunk(args) -> list[tuple[int, list[tuple[str, str, float]]]]:
    model, cfg, blobs, chunk = args
    out = []
    for pos, path in chunk:
        result = classify_bytes(blobs[path], model, cfg, path)
        out.append((pos, [(wc.kind, wc.id, score) for wc, score in result.ranked]))
    return out


def model_config_hash(model: ModelType) -> Optional[str]:
    return model.config_hash if isinstance(model, TrainingSet) else None


def test_case(index: TestCaseIndex, model: ModelType, cfg: PipelineConfig,
              root, jobs: int = 1, blobs: Optional[dict[str, bytes]] = None,
              ) -> list[ScanWarning]:
    """Classify every file of a test index and keep the accepted warnings.

    Classification is read-only on the model, so with jobs > 1 the file list
    is split across forked compute workers (the parent does all the reading
    first); warnings come back in index order either way, making outputs
    identical across job counts.
    """
    stored_hash = model_config_hash(model)
    if stored_hash is not None and stored_hash != cfg.config_hash:
        raise ConfigError(
            f"model was trained under a different configuration "
            f"(model {stored_hash}, requested {cfg.config_hash})")
    jobs = _effective_jobs(jobs)
    tasks = [(pos, entry.path) for pos, entry in enumerate(index.entries)]
    results: dict[int, ResultSet] = {}
    if jobs == 1 or len(tasks) < 2 * jobs:
        for pos, path in tasks:
            data = blobs[path] if blobs else _read(root, path)
            results[pos] = classify_bytes(data, model, cfg, path)
    else:
        blobs = _load_blobs(root, (path for _, path in tasks), blobs)
        payloads = [(model, cfg, blobs, chunk)
                    for chunk in _chunks(tasks, jobs)]
        for chunk_result in _map_chunked(_classify_chunk, payloads, jobs):
            for pos, ranked in chunk_result:
                results[pos] = ResultSet(
                    [(WeaknessClass(kind, cid), score)
                     for kind, cid, score in ranked])
    warnings = []
    for pos, entry in enumerate(index.entries):
        warning = warning_from_result(entry.path, results[pos], cfg)
        if warning is not None:
            warnings.append(warning)
    return warnings


def calibrate_threshold(index: TestCaseIndex, model: ModelType,
                        cfg: PipelineConfig, root, factor: float = 1.0) -> float:
    """Detection-mode threshold: the worst top-1 score over the training
    files themselves, scaled by `factor`. Content the model has seen stays
    accepted; anything scoring beyond every known example gets rejected."""
    worst = 0.0
    for entry in index.entries:
        result = classify_bytes(_read(root, entry.path), model, cfg, entry.path)
        if result.ranked:
            worst = max(worst, result.ranked[0][1])
    return worst * factor


# --- permutation sweeps ----------------------------------------------------------

@dataclass
class SweepEntry:
    config: PipelineConfig
    option_string: str
    first: Optional[RunStats]
    second: Optional[RunStats]
    elapsed: float
    error: Optional[str] = None

    @property
    def first_pct(self) -> Decimal:
        if self.first is None or not self.first.per_config:
            return Decimal("-1")
        return self.first.per_config[0].pct


def run_once(train_index: TestCaseIndex, test_index: TestCaseIndex,
             cfg: PipelineConfig, root, jobs: int = 1,
             ) -> tuple[list[ScanWarning], RunStats, RunStats]:
    """Train, test, and score in one go.

    Parallel runs preload each distinct file exactly once and share the
    bytes between the training and testing passes (self-tests read the same
    corpus twice otherwise), trading memory for wall-clock time.
    """
    blobs: Optional[dict[str, bytes]] = None
    if _effective_jobs(jobs) > 1:
        paths = [e.path for e in train_index.entries]
        paths += [e.path for e in test_index.entries]
        blobs = _load_blobs(root, paths)
    model = train_case(train_index, cfg, root, jobs=jobs, blobs=blobs)
    warnings = test_case(test_index, model, cfg, root, jobs=jobs, blobs=blobs)
    first, second = score_stats(warnings, test_index, cfg)
    return warnings, first, second


def sweep(train_index: TestCaseIndex, test_index: TestCaseIndex,
          grid: Iterable[PipelineConfig], root, jobs: int = 1) -> list[SweepEntry]:
    """Run every configuration and rank them by first-guess precision.

    One failing configuration (say, an extractor rejecting a parameter)
    is recorded as a failed row and the sweep keeps going; ties rank by
    option string so repeated sweeps agree.
    """
    entries = []
    for cfg in grid:
        started = time.perf_counter()
        try:
            _, first, second = run_once(train_index, test_index, cfg, root,
                                        jobs=jobs)
            entries.append(SweepEntry(cfg, cfg.option_string, first, second,
                                      time.perf_counter() - started))
        except Exception as exc:  # noqa: BLE001 - sweep must survive any config
            entries.append(SweepEntry(cfg, cfg.option_string, None, None,
                                      time.perf_counter() - started, str(exc)))
    entries.sort(key=lambda e: (e.error is not None, -e.first_pct, e.option_string))
    return entries


def default_grid(class_kind: str = "cve") -> list[PipelineConfig]:
    """The stock sweep: preprocessors x extractors x metrics, signal pipeline,
    plus the byte-unigram NLP baselines."""
    grid = []
    for filter_kind in ("raw", "norm", "low", "sdwt"):
        for extractor in ("fft", "lpc", "minmax"):
            for metric in METRICS:
                grid.append(PipelineConfig(
                    class_kind=class_kind, filter_kind=filter_kind,
                    extractor=extractor, metric=metric))
    for smoothing in nlp.SMOOTHINGS:
        grid.append(PipelineConfig(class_kind=class_kind, pipeline="nlp",
                                   smoothing=smoothing))
    return grid


def merge_sweep_stats(entries: list[SweepEntry]) -> tuple[RunStats, RunStats]:
    """Collapse sweep entries into two table-ready stats blocks."""
    first = RunStats("first")
    second = RunStats("second")
    for entry in entries:
        if entry.error is not None:
            first.diagnostics.append(f"{entry.option_string}: {entry.error}")
            second.diagnostics.append(f"{entry.option_string}: {entry.error}")
            continue
        first.per_config.extend(entry.first.per_config)
        first.diagnostics.extend(entry.first.diagnostics)
        second.per_config.extend(entry.second.per_config)
        second.diagnostics.extend(entry.second.diagnostics)
    for stats in (first, second):
        stats.per_config.sort(key=lambda r: (-r.pct, r.key))
    return first, second
