"""Resumable stage orchestration over a JSONL manifest.

Stages, in order: prompts, perturb, densify, images, score, select, train,
analyze. Per-sample stages skip samples that already have a record, so a
rerun or a resumed run only does the missing work. Records are appended in
sample order even when samples are processed by a worker pool.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from ospo import __version__
from ospo.analysis import (
    CaseLabel,
    classify_indistinguishable,
    compare_pipelines,
    conditional_mean_local,
    gap_histogram,
    gaps_from_records,
    write_comparison,
)
from ospo.backend import CorruptionParams, DecodeParams, ImageArtifact, SceneGraph, SimulatorBackend
from ospo.candidates import (
    Ablations,
    Candidate,
    candidate_images,
    densify_candidate,
    make_candidates,
    select,
)
from ospo.errors import ConfigError, NoCandidates, StageIncomplete
from ospo.manifest import HEADER_ID, Manifest, read_records
from ospo.perturbation import DensePromptPair, PerturbKind, densify_pair
from ospo.prompts import CATEGORIES, KeywordPools, StructuredPrompt, build_keyword_pools, generate_base_prompts
from ospo.rng import derive_seed
from ospo.selection import NO_POSITIVE_LOCAL_GAP
from ospo.simpo import PreferenceRecord, SimpoConfig, ToyPolicy, save_checkpoint, train, write_trace_csv
from ospo.vqa_scoring import ImageScore, ScoreCard, decompose_questions, probe_image, score_pair

STAGES = ("prompts", "perturb", "densify", "images", "score", "select", "train", "analyze")
SAMPLE_STAGES = STAGES[:6]
TRAIN_ID = "__train__"
ANALYZE_ID = "__analyze__"
MANIFEST_NAME = "manifest.jsonl"
_PREFIX = {"Attribute": "attr", "Layout": "layout", "NonSpatial": "nonsp", "Complex": "complex"}


# ------------------------------------------------------------------ config


@dataclass(frozen=True)
class AblationFlags:
    no_negative_prompts: bool = False
    no_densification: bool = False
    random_selection: bool = False
    best_of_n_mode: bool = False

    def core(self) -> Ablations:
        return Ablations(self.no_negative_prompts, self.no_densification, self.random_selection)


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    categories: dict = field(default_factory=lambda: {c: 25 for c in CATEGORIES})
    out_dir: str = "runs/default"
    backend: str = "simulator"  # simulator | remote
    remote: dict = field(default_factory=dict)  # RemoteConfig fields
    vocab_size: int = 512
    pool_source: str = "builtin"
    prompt_mode: str = "rule"
    densify_mode: str = "rule"
    question_mode: str = "rule"
    decode: DecodeParams = DecodeParams()
    corruption: CorruptionParams = CorruptionParams()
    epsilon: float = 1e-6
    simpo_preset: str = "toy"
    simpo: dict = field(default_factory=dict)  # SimpoConfig overrides
    ablations: AblationFlags = AblationFlags()
    best_of_n: int = 10
    analysis_prompts: int = 50
    workers: int = 1

    def __post_init__(self):
        if self.ablations.best_of_n_mode and self.ablations.no_negative_prompts:
            raise ConfigError("best_of_n_mode already implies no_negative_prompts; set only one")
        unknown = set(self.categories) - set(CATEGORIES)
        if unknown:
            raise ConfigError(f"unknown categories {sorted(unknown)}")
        if any(int(n) < 0 for n in self.categories.values()):
            raise ConfigError("category counts must be >= 0")
        if self.backend not in ("simulator", "remote"):
            raise ConfigError(f"unknown backend {self.backend!r}")
        for name in ("prompt_mode", "densify_mode", "question_mode"):
            if getattr(self, name) not in ("rule", "backend"):
                raise ConfigError(f"{name} must be 'rule' or 'backend'")
        if self.epsilon <= 0 or self.best_of_n < 2 or self.workers < 1:
            raise ConfigError("need epsilon > 0, best_of_n >= 2, workers >= 1")
        try:
            self.simpo_config()
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad simpo settings: {exc}") from exc

    def simpo_config(self) -> SimpoConfig:
        return SimpoConfig.preset(self.simpo_preset, **{"vocab_size": self.vocab_size, **self.simpo})

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys {sorted(extra)}")
        d = dict(d)
        try:
            if "decode" in d:
                d["decode"] = DecodeParams(**d["decode"])
            if "corruption" in d:
                d["corruption"] = CorruptionParams(**d["corruption"])
            if "ablations" in d:
                d["ablations"] = AblationFlags(**d["ablations"])
            return cls(**d)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(d)

    def config_hash(self) -> str:
        """Hash of everything that affects outputs (the output path and worker count do not)."""
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()

    @property
    def manifest_path(self) -> Path:
        return Path(self.out_dir) / MANIFEST_NAME


# ----------------------------------------------------------------- context


class Run:
    """Everything a stage needs: config, manifest, pools and backend."""

    def __init__(self, config: PipelineConfig, backend=None, resume: bool = False):
        self.config = config
        self.out = Path(config.out_dir)
        self.resume = resume
        self._backend = backend
        self._pools: KeywordPools | None = None
        self.manifest = Manifest(config.manifest_path, config.config_hash(), __version__)

    def close(self):
        self.manifest.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    @property
    def backend(self):
        if self._backend is None:
            if self.config.backend == "simulator":
                self._backend = SimulatorBackend(self.pools, self.config.corruption, self.config.vocab_size)
            else:
                from ospo.remote import RemoteBackend, RemoteConfig

                try:
                    rc = RemoteConfig(**self.config.remote)
                except (TypeError, ValueError) as exc:
                    raise ConfigError(f"bad remote settings: {exc}") from exc
                self._backend = RemoteBackend(rc)
        return self._backend

    @property
    def pools(self) -> KeywordPools:
        if self._pools is None:
            if self.config.pool_source == "builtin":
                self._pools = build_keyword_pools("builtin", self.config.seed)
            else:
                self._pools = build_keyword_pools("backend", self.config.seed, backend=self.backend)
        return self._pools


def _sample_ids(config: PipelineConfig) -> list[tuple[str, str, int]]:
    out = []
    for cat in CATEGORIES:
        for i in range(int(config.categories.get(cat, 0))):
            out.append((f"{_PREFIX[cat]}-{i:05d}", cat, i))
    return out


def _base(run: Run, sid: str) -> StructuredPrompt:
    return StructuredPrompt.from_dict(run.manifest.get(sid, "prompts")["structured"])


def _in_order(run: Run, items, fn):
    """Apply ``fn`` to ``items`` (possibly in parallel) and yield results in input order."""
    if run.config.workers <= 1:
        for it in items:
            yield it, fn(it)
        return
    with ThreadPoolExecutor(max_workers=run.config.workers) as pool:
        yield from zip(items, pool.map(fn, items))


def _pending(run: Run, stage: str) -> list[str]:
    """Samples still missing ``stage``; checks predecessors and partial-stage resumes."""
    samples = run.manifest.samples()
    if not samples:
        raise StageIncomplete("no prompts in the manifest; run the prompts stage first")
    prev = SAMPLE_STAGES[SAMPLE_STAGES.index(stage) - 1]
    missing_prev = [s for s in samples if not run.manifest.has(s, prev)]
    if missing_prev:
        raise StageIncomplete(f"stage {prev!r} incomplete for {len(missing_prev)} samples (e.g. {missing_prev[0]})")
    todo = [s for s in samples if not run.manifest.has(s, stage)]
    if todo and len(todo) < len(samples) and not run.resume:
        raise StageIncomplete(f"stage {stage!r} is partially complete; rerun with --resume")
    return todo


# ------------------------------------------------------------------ images


def save_image(run: Run, img: ImageArtifact, rel: str) -> dict:
    """Persist an image under out_dir; the returned ref holds only relative paths."""
    meta = {"id": img.id, "source_prompt_id": img.source_prompt_id, "decode": dataclasses.asdict(img.decode)}
    if isinstance(img.payload, SceneGraph):
        path = run.out / "images" / f"{rel}.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps({**meta, "scene": img.payload.to_dict()}, sort_keys=True))
        return {**meta, "path": f"images/{rel}.json", "format": "scene"}
    path = run.out / "images" / f"{rel}.png"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(img.payload)
    return {**meta, "path": f"images/{rel}.png", "format": "png",
            "token_ids": None if img.token_ids is None else list(img.token_ids)}


def load_image(run: Run, ref: dict) -> ImageArtifact:
    path = run.out / ref["path"]
    decode = DecodeParams(**ref["decode"])
    if ref["format"] == "scene":
        scene = SceneGraph.from_dict(json.loads(path.read_text())["scene"])
        return ImageArtifact(ref["id"], scene, ref["source_prompt_id"], decode)
    tokens = ref.get("token_ids")
    return ImageArtifact(ref["id"], path.read_bytes(), ref["source_prompt_id"], decode,
                         None if tokens is None else tuple(tokens))


# ------------------------------------------------------------------ stages


def _stage_prompts(run: Run) -> dict:
    cfg = run.config
    processed = skipped = 0
    by_cat: dict[str, list[StructuredPrompt]] = {}
    for sid, cat, i in _sample_ids(cfg):
        if run.manifest.has(sid, "prompts"):
            skipped += 1
            continue
        if cat not in by_cat:
            backend = run.backend if cfg.prompt_mode == "backend" else None
            by_cat[cat] = generate_base_prompts(cat, int(cfg.categories[cat]), run.pools, cfg.seed,
                                                mode=cfg.prompt_mode, backend=backend)
        p = by_cat[cat][i]
        run.manifest.append(sid, "prompts", {"category": cat, "surface": p.surface, "structured": p.to_dict(),
                                             "seed": derive_seed(cfg.seed, "prompts", cat)})
        processed += 1
    return {"processed": processed, "skipped": skipped}


def _stage_perturb(run: Run) -> dict:
    cfg = run.config
    todo = _pending(run, "perturb")
    skips = 0

    def work(sid):
        if cfg.ablations.best_of_n_mode:
            return [Candidate(k, None, "best_of_n_mode") for k in PerturbKind]
        return make_candidates(sid, _base(run, sid), run.pools, cfg.seed, cfg.ablations.core())

    for sid, cands in _in_order(run, todo, work):
        skips += sum(c.skip_reason is not None for c in cands)
        run.manifest.append(sid, "perturb", {"candidates": [c.to_dict() for c in cands]})
    return {"processed": len(todo), "skipped": len(run.manifest.samples()) - len(todo), "not_perturbable": skips}


def _candidates(run: Run, sid: str) -> list[Candidate]:
    return [Candidate.from_dict(c) for c in run.manifest.get(sid, "perturb")["candidates"]]


def _stage_densify(run: Run) -> dict:
    cfg = run.config
    todo = _pending(run, "densify")
    backend = run.backend if cfg.densify_mode == "backend" else None
    fallbacks = 0

    def work(sid):
        base = _base(run, sid)
        if cfg.ablations.best_of_n_mode:
            if cfg.ablations.no_densification:
                return {"base_dense": base.to_dict()}
            pair = densify_pair(base, base, PerturbKind.SWAP, cfg.densify_mode,
                                derive_seed(cfg.seed, "densify", sid, "best_of_n"), backend)
            return {"base_dense": pair.base_dense.to_dict(), "provenance": pair.provenance}
        pairs = {}
        for c in _candidates(run, sid):
            if c.negative is None:
                continue
            pairs[c.kind.label] = densify_candidate(sid, base, c, cfg.seed, cfg.densify_mode, backend,
                                                    cfg.ablations.core()).to_dict()
        return {"pairs": pairs}

    for sid, data in _in_order(run, todo, work):
        fallbacks += sum(bool(p["provenance"].get("fallback")) for p in data.get("pairs", {}).values())
        run.manifest.append(sid, "densify", data)
    return {"processed": len(todo), "skipped": len(run.manifest.samples()) - len(todo), "fallbacks": fallbacks}


def _stage_images(run: Run) -> dict:
    cfg = run.config
    todo = _pending(run, "images")

    def work(sid):
        dens = run.manifest.get(sid, "densify")
        if cfg.ablations.best_of_n_mode:
            base_dense = StructuredPrompt.from_dict(dens["base_dense"])
            refs = []
            for i in range(cfg.best_of_n):
                dec = DecodeParams(cfg.decode.guidance_weight, cfg.decode.temperature,
                                   derive_seed(cfg.seed, "best_of_n", sid, i))
                img = run.backend.generate_image(base_dense, dec, cfg.corruption, f"{sid}/bon/{i}")
                refs.append(save_image(run, img, f"{sid}/bon/{i}"))
            return {"images": {"best_of_n": refs}}
        out = {}
        for label, pd in dens["pairs"].items():
            pair = DensePromptPair.from_dict(pd)
            w, l_ = candidate_images(sid, pair, run.backend, cfg.decode, cfg.seed, cfg.corruption)
            out[label] = {"w": save_image(run, w, f"{sid}/{label}/w"), "l": save_image(run, l_, f"{sid}/{label}/l")}
        return {"images": out}

    for sid, data in _in_order(run, todo, work):
        run.manifest.append(sid, "images", data)
    return {"processed": len(todo), "skipped": len(run.manifest.samples()) - len(todo)}


def _score_dict(s: ImageScore) -> dict:
    return {"s_local": s.s_local, "s_global": s.s_global, "local": [list(a) for a in s.local_answers],
            "global": list(s.global_answer)}


def _stage_score(run: Run) -> dict:
    cfg = run.config
    todo = _pending(run, "score")

    def work(sid):
        base = _base(run, sid)
        qs = decompose_questions(base, cfg.question_mode, run.backend if cfg.question_mode == "backend" else None,
                                 derive_seed(cfg.seed, "questions", sid), run.pools)
        imgs = run.manifest.get(sid, "images")["images"]
        if cfg.ablations.best_of_n_mode:
            scores = [_score_dict(probe_image(load_image(run, ref), qs, run.backend)) for ref in imgs["best_of_n"]]
            return {"questions": qs.to_dict(), "best_of_n": scores}
        cards = {}
        for label, refs in imgs.items():
            w, l_ = load_image(run, refs["w"]), load_image(run, refs["l"])
            cards[label] = score_pair(w, l_, qs, run.backend).to_dict()
        return {"questions": qs.to_dict(), "cards": cards}

    for sid, data in _in_order(run, todo, work):
        run.manifest.append(sid, "score", data)
    return {"processed": len(todo), "skipped": len(run.manifest.samples()) - len(todo)}


def _tokens(run: Run, ref: dict) -> list[int]:
    img = load_image(run, ref)
    seq = img.token_sequence
    return [] if seq is None else list(seq)


def _select_best_of_n(run: Run, sid: str, base: StructuredPrompt, scores: list[dict]) -> dict:
    n = len(scores)
    s_local = [s["s_local"] for s in scores]
    best = max(range(n), key=lambda i: (s_local[i], -i))
    worst = min((i for i in range(n) if i != best), key=lambda i: (s_local[i], i))
    dl = s_local[best] - s_local[worst]
    dg = scores[best]["s_global"] - scores[worst]["s_global"]
    data = {"mode": "best_of_n", "best_index": best, "worst_index": worst, "chosen_kind": None,
            "gap": {"kind": "best_of_n", "delta_local": dl, "delta_global": dg},
            "discarded": dl <= 0, "reason": NO_POSITIVE_LOCAL_GAP if dl <= 0 else None}
    if dl > 0:
        refs = run.manifest.get(sid, "images")["images"]["best_of_n"]
        data["record"] = PreferenceRecord(base.surface, tuple(_tokens(run, refs[best])),
                                          tuple(_tokens(run, refs[worst])), sid, "best_of_n", None).to_dict()
    return data


def _stage_select(run: Run) -> dict:
    cfg = run.config
    todo = _pending(run, "select")
    discarded = 0

    def work(sid):
        base = _base(run, sid)
        sc = run.manifest.get(sid, "score")
        if cfg.ablations.best_of_n_mode:
            return _select_best_of_n(run, sid, base, sc["best_of_n"])
        cards = {PerturbKind.parse(k): ScoreCard.from_dict(v) for k, v in sc["cards"].items()}
        try:
            res = select(sid, cards, cfg.epsilon, cfg.seed, cfg.ablations.core())
        except NoCandidates:
            return {"mode": "ospo", "t_scores": [None, None, None], "chosen_index": None, "chosen_kind": None,
                    "discarded": True, "reason": "no_candidates", "gap": None}
        data = {"mode": "ospo", **res.to_dict(), "gap": None}
        kind = res.chosen_kind
        if kind is not None:
            card = cards[kind]
            data["gap"] = {"kind": kind.label, "delta_local": card.delta_local, "delta_global": card.delta_global}
            refs = run.manifest.get(sid, "images")["images"][kind.label]
            t = res.t_scores[int(kind)]
            data["record"] = PreferenceRecord(base.surface, tuple(_tokens(run, refs["w"])),
                                              tuple(_tokens(run, refs["l"])), sid, kind.label, t).to_dict()
        return data

    for sid, data in _in_order(run, todo, work):
        discarded += bool(data["discarded"])
        run.manifest.append(sid, "select", data)
    return {"processed": len(todo), "skipped": len(run.manifest.samples()) - len(todo), "discarded": discarded}


def _require_all(run: Run, stage: str) -> list[str]:
    samples = run.manifest.samples()
    missing = [s for s in samples if not run.manifest.has(s, stage)]
    if not samples or missing:
        raise StageIncomplete(f"stage {stage!r} incomplete for {len(missing) if samples else 'all'} samples")
    return samples


def preference_records(records) -> list[PreferenceRecord]:
    return [PreferenceRecord.from_dict(r["data"]["record"]) for r in records
            if r.get("stage") == "select" and not r["data"].get("discarded") and r["data"].get("record")]


def _stage_train(run: Run) -> dict:
    if run.manifest.has(TRAIN_ID, "train"):
        return {"processed": 0, "skipped": 1}
    samples = _require_all(run, "select")
    cfg = run.config.simpo_config()
    dataset = [PreferenceRecord.from_dict(run.manifest.get(s, "select")["record"]) for s in samples
               if run.manifest.get(s, "select").get("record")]
    data: dict = {"records": len(dataset), "config": dataclasses.asdict(cfg)}
    if dataset:
        policy = ToyPolicy.zeros(cfg.vocab_size, cfg.max_len, cfg.buckets)
        result = train(policy, dataset, cfg)
        (run.out / "train").mkdir(parents=True, exist_ok=True)
        save_checkpoint(result.policy, run.out / "train" / "policy.bin", result.trace[-1]["step"])
        write_trace_csv(result.trace, run.out / "train" / "trace.csv")
        first, last = result.trace[0], result.trace[-1]
        data.update({"steps": last["step"], "initial_loss": first["loss"], "final_loss": last["loss"],
                     "initial_margin": first["mean_margin"], "final_margin": last["mean_margin"],
                     "checkpoint": "train/policy.bin", "trace": "train/trace.csv"})
    else:
        data["skipped_reason"] = "no selected pairs"
    run.manifest.append(TRAIN_ID, "train", data)
    return {"processed": 1, "skipped": 0}


def _stage_analyze(run: Run) -> dict:
    if run.manifest.has(ANALYZE_ID, "analyze"):
        return {"processed": 0, "skipped": 1}
    samples = _require_all(run, "select")
    cfg = run.config
    adir = run.out / "analysis"
    adir.mkdir(parents=True, exist_ok=True)
    records = [{"stage": "select", "data": run.manifest.get(s, "select")} for s in samples]
    gaps = gaps_from_records(records)
    data: dict = {"selected_pairs": len(gaps)}
    if gaps:
        gap_histogram(gaps).write_csv(adir / "gap_density.csv")
        data["gap_density"] = "analysis/gap_density.csv"
    labels = []
    for s in samples:
        sel = run.manifest.get(s, "select")
        if sel.get("mode") != "ospo" or sel.get("chosen_kind") is None:
            continue
        card = ScoreCard.from_dict(run.manifest.get(s, "score")["cards"][sel["chosen_kind"]])
        labels.append(classify_indistinguishable([a > b for a, b in card.transcript["w"]["local"]],
                                                 [a > b for a, b in card.transcript["l"]["local"]]).value)
    data["selected_cases"] = {c.value: labels.count(c.value) for c in CaseLabel}
    attr = [s for s in samples if run.manifest.get(s, "prompts")["category"] == "Attribute"][:cfg.analysis_prompts]
    if cfg.backend == "simulator" and attr:
        rep = compare_pipelines([_base(run, s) for s in attr], cfg.corruption, run.backend, cfg.seed,
                                n=cfg.best_of_n, decode=cfg.decode, pools=run.pools, epsilon=cfg.epsilon)
        summary = write_comparison(rep, adir / "compare")
        data["comparison"] = {k: v for k, v in summary.items() if not isinstance(v, float) or math.isfinite(v)}
        data["comparison_report"] = "analysis/compare/report.md"
    run.manifest.append(ANALYZE_ID, "analyze", data)
    return {"processed": 1, "skipped": 0}


_STAGE_FN = {"prompts": _stage_prompts, "perturb": _stage_perturb, "densify": _stage_densify,
             "images": _stage_images, "score": _stage_score, "select": _stage_select, "train": _stage_train,
             "analyze": _stage_analyze}


def run_stage(stage: str, config: PipelineConfig, backend=None, resume: bool = False) -> dict:
    """Run one stage and return its summary (processed / skipped / discarded counts)."""
    if stage not in _STAGE_FN:
        raise ConfigError(f"unknown stage {stage!r}")
    with Run(config, backend, resume) as run:
        summary = _STAGE_FN[stage](run)
    return {"stage": stage, **summary}


def run_all(config: PipelineConfig, backend=None, resume: bool = False, stages=STAGES) -> list[dict]:
    return [run_stage(s, config, backend, resume) for s in stages]


# ------------------------------------------------------------------ report


def emit_report(manifest_path, out_dir=None) -> dict:
    """report.md plus selection.csv next to the manifest (or in ``out_dir``)."""
    manifest_path = Path(manifest_path)
    if not manifest_path.exists():
        raise StageIncomplete(f"no manifest at {manifest_path}")
    records = read_records(manifest_path)
    sel = [r for r in records if r.get("stage") == "select"]
    if not sel:
        raise StageIncomplete("select stage has not produced any records")
    out_dir = Path(out_dir) if out_dir else manifest_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    category = {r["sample_id"]: r["data"]["category"] for r in records if r.get("stage") == "prompts"}
    kinds = ["swap", "replace", "drop", "best_of_n"]
    table: dict[str, dict] = {}
    for r in sel:
        cat = category.get(r["sample_id"], "?")
        row = table.setdefault(cat, {**{k: 0 for k in kinds}, "discarded": 0, "total": 0})
        row["total"] += 1
        d = r["data"]
        if d.get("discarded"):
            row["discarded"] += 1
        elif d.get("gap"):
            row[d["gap"]["kind"]] += 1
    totals = {k: sum(row[k] for row in table.values()) for k in kinds + ["discarded", "total"]}
    gaps = gaps_from_records(sel)
    with open(out_dir / "selection.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["category"] + kinds + ["discarded", "total", "discard_rate"])
        for cat in sorted(table):
            row = table[cat]
            w.writerow([cat] + [row[k] for k in kinds] + [row["discarded"], row["total"],
                                                          f"{row['discarded'] / row['total']:.4f}"])
    lines = ["# Run report", "", "## Selected kinds", "",
             "| category | swap | replace | drop | best_of_n | discarded | total |", "|---|---|---|---|---|---|---|"]
    for cat in sorted(table):
        row = table[cat]
        lines.append(f"| {cat} | " + " | ".join(str(row[k]) for k in kinds + ["discarded", "total"]) + " |")
    lines.append("| all | " + " | ".join(str(totals[k]) for k in kinds + ["discarded", "total"]) + " |")
    lines += ["", f"Discard rate: {totals['discarded'] / totals['total']:.4f}", "", "## Gaps of selected pairs", ""]
    if gaps:
        dl = [g[0] for g in gaps]
        dg = [g[1] for g in gaps]
        lines += [f"Pairs: {len(gaps)}", f"Mean local gap: {math.fsum(dl) / len(dl):.4f}",
                  f"Mean global gap: {math.fsum(dg) / len(dg):.4f}",
                  f"Mean local gap where global gap < 0.5: {conditional_mean_local(gaps):.4f}"]
    else:
        lines.append("No selected pairs.")
    summary: dict = {"kinds": {k: totals[k] for k in kinds}, "discarded": totals["discarded"],
                     "total": totals["total"], "per_category": table}
    train_rec = next((r["data"] for r in records if r.get("stage") == "train"), None)
    if train_rec:
        lines += ["", "## Training", ""]
        if "final_loss" in train_rec:
            lines += [f"Records: {train_rec['records']}, steps: {train_rec['steps']}",
                      f"Loss: {train_rec['initial_loss']:.6f} -> {train_rec['final_loss']:.6f}",
                      f"Mean margin: {train_rec['initial_margin']:.6f} -> {train_rec['final_margin']:.6f}",
                      f"Trace: {train_rec['trace']}"]
        else:
            lines.append(train_rec.get("skipped_reason", "skipped"))
        summary["train"] = {k: v for k, v in train_rec.items() if k != "config"}
    an = next((r["data"] for r in records if r.get("stage") == "analyze"), None)
    if an:
        lines += ["", "## Analysis", ""]
        if an.get("gap_density"):
            lines.append(f"Gap density: {an['gap_density']}")
        if an.get("comparison_report"):
            c = an["comparison"]
            lines.append(f"Indistinguishable fraction, Best-of-N {c['best_of_n_fraction']:.4f} vs OSPO "
                         f"{c['ospo_fraction']:.4f} ({an['comparison_report']})")
        summary["analysis"] = an
    lines.append("")
    (out_dir / "report.md").write_text("\n".join(lines))
    return summary


# -------------------------------------------------------------- validation


def _violation(line: int, rec: dict, kind: str, message: str) -> dict:
    return {"line": line, "sample_id": rec.get("sample_id") if isinstance(rec, dict) else None,
            "stage": rec.get("stage") if isinstance(rec, dict) else None, "kind": kind, "message": message}


def _in_range(x, lo, hi) -> bool:
    return isinstance(x, (int, float)) and lo <= x <= hi


def validate_manifest(manifest_path, vocab_size: int = 512, max_len: int = 32) -> list[dict]:
    """Type-invariant violations as data: ranges, token bounds, stage order, record shape."""
    violations: list[dict] = []
    seen: dict[str, set] = {}
    with open(manifest_path, encoding="utf-8") as f:
        lines = f.readlines()
    for no, line in enumerate(lines, start=1):
        if not line.endswith("\n"):
            violations.append(_violation(no, {}, "torn", "trailing line is incomplete"))
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            violations.append(_violation(no, {}, "json", str(exc)))
            continue
        if no == 1:
            if rec.get("sample_id") != HEADER_ID or "config_hash" not in rec:
                violations.append(_violation(no, rec, "header", "first record must be the header"))
            continue
        sid, stage = rec.get("sample_id"), rec.get("stage")
        if sid is None:
            violations.append(_violation(no, rec, "shape", "record has no sample_id"))
            continue
        if stage not in STAGES:
            violations.append(_violation(no, rec, "ordering", f"missing or unknown stage marker {stage!r}"))
            continue
        done = seen.setdefault(sid, set())
        if stage in done:
            violations.append(_violation(no, rec, "duplicate", f"second {stage} record"))
        if stage in SAMPLE_STAGES:
            prev = SAMPLE_STAGES[:SAMPLE_STAGES.index(stage)]
            missing = [p for p in prev if p not in done]
            if missing:
                violations.append(_violation(no, rec, "ordering", f"{stage} before {missing[-1]}"))
        done.add(stage)
        data = rec.get("data") or {}
        if stage == "score":
            for label, card in data.get("cards", {}).items():
                for key in ("s_local_w", "s_global_w", "s_local_l", "s_global_l"):
                    if not _in_range(card.get(key), -1.0, 1.0):
                        violations.append(_violation(no, rec, "range", f"{label}.{key} = {card.get(key)} not in [-1, 1]"))
                for side in ("w", "l"):
                    t = card.get("transcript", {}).get(side, {})
                    for py, pn in t.get("local", []) + ([t["global"]] if "global" in t else []):
                        if not (_in_range(py, 0, 1) and _in_range(pn, 0, 1)):
                            violations.append(_violation(no, rec, "range", f"{label}.{side} probability out of [0, 1]"))
            for k, s in enumerate(data.get("best_of_n", [])):
                for key in ("s_local", "s_global"):
                    if not _in_range(s.get(key), -1.0, 1.0):
                        violations.append(_violation(no, rec, "range", f"image {k} {key} not in [-1, 1]"))
        if stage == "select":
            ci = data.get("chosen_index")
            if data.get("mode") == "ospo":
                if ci is not None and ci not in (1, 2, 3):
                    violations.append(_violation(no, rec, "range", f"chosen_index {ci} not in 1..3"))
                if bool(data.get("discarded")) != (ci is None):
                    violations.append(_violation(no, rec, "consistency", "discarded must hold iff nothing chosen"))
            gap = data.get("gap")
            if gap is not None:
                for key in ("delta_local", "delta_global"):
                    if not _in_range(gap.get(key), -2.0, 2.0):
                        violations.append(_violation(no, rec, "range", f"{key} = {gap.get(key)} not in [-2, 2]"))
            pr = data.get("record")
            if pr:
                for key in ("y_w", "y_l"):
                    y = pr.get(key) or []
                    if not y:
                        violations.append(_violation(no, rec, "tokens", f"{key} is empty"))
                    elif len(y) > max_len or min(y) < 0 or max(y) >= vocab_size:
                        violations.append(_violation(no, rec, "tokens",
                                                     f"{key} outside bounds (len {len(y)}, max id {max(y)})"))
    return violations
