"""Best-of-N baseline, indistinguishable-pair taxonomy, pipeline comparison and gap density."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ospo.backend import CorruptionParams, DecodeParams
from ospo.candidates import Ablations, card_answers, representative_kind, run_sample
from ospo.errors import EmptyManifest, MismatchedQuestionSets
from ospo.prompts import KeywordPools, StructuredPrompt
from ospo.rng import derive_seed
from ospo.vqa_scoring import ImageScore, binary_answers, decompose_questions, probe_image


class CaseLabel(str, enum.Enum):
    ALL_YES = "AllYes"
    ALL_NO = "AllNo"
    ALL_SAME = "AllSame"
    DISTINCT = "Distinct"

    @property
    def indistinguishable(self) -> bool:
        return self is not CaseLabel.DISTINCT


def classify_indistinguishable(best, worst) -> CaseLabel:
    best, worst = tuple(bool(a) for a in best), tuple(bool(a) for a in worst)
    if len(best) != len(worst):
        raise MismatchedQuestionSets(f"{len(best)} vs {len(worst)} answers")
    if all(best) and all(worst):
        return CaseLabel.ALL_YES
    if not any(best) and not any(worst):
        return CaseLabel.ALL_NO
    if best == worst:
        return CaseLabel.ALL_SAME
    return CaseLabel.DISTINCT


@dataclass(frozen=True)
class BestOfN:
    prompt: StructuredPrompt
    best_index: int
    worst_index: int
    correct: tuple[int, ...]
    best: ImageScore
    worst: ImageScore
    best_image: object = field(default=None, compare=False, repr=False)
    worst_image: object = field(default=None, compare=False, repr=False)

    @property
    def best_answers(self) -> tuple[bool, ...]:
        return binary_answers(self.best.local_answers)

    @property
    def worst_answers(self) -> tuple[bool, ...]:
        return binary_answers(self.worst.local_answers)

    @property
    def gaps(self) -> tuple[float, float]:
        return self.best.s_local - self.worst.s_local, self.best.s_global - self.worst.s_global


def best_of_n_pair(prompt: StructuredPrompt, images, questions, backend) -> BestOfN:
    """Best and worst of ``images`` by local score.

    ``correct`` keeps the per-image count of questions answered yes. Ties go
    to the lower index; the worst image is picked among the others,
    so the pair always holds two distinct samples.
    """
    if len(images) < 2:
        raise ValueError("need at least two images")
    scores = [probe_image(img, questions, backend) for img in images]
    correct = tuple(sum(binary_answers(s.local_answers)) for s in scores)
    local = [s.s_local for s in scores]
    best = max(range(len(images)), key=lambda i: (local[i], -i))
    worst = min((i for i in range(len(images)) if i != best), key=lambda i: (local[i], i))
    return BestOfN(prompt, best, worst, correct, scores[best], scores[worst], images[best], images[worst])


def run_best_of_n(prompts, n: int, decode: DecodeParams, corruption: CorruptionParams | None, backend,
                  seed: int, dense_prompts=None) -> list[BestOfN]:
    """N images per prompt on distinct seed substreams, reduced to a best/worst pair.

    Images realize ``dense_prompts[i]`` when given, else the prompt itself;
    questions always come from the prompt.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    out = []
    for k, p in enumerate(prompts):
        source = p if dense_prompts is None else dense_prompts[k]
        qs = decompose_questions(p)
        images = [backend.generate_image(source, DecodeParams(decode.guidance_weight, decode.temperature,
                                                              derive_seed(seed, "best_of_n", p.surface, i)),
                                         corruption, f"{p.surface}/{i}")
                  for i in range(n)]
        out.append(best_of_n_pair(p, images, qs, backend))
    return out


def case_counts(labels) -> dict[str, int]:
    counts = {c.value: 0 for c in CaseLabel}
    for lab in labels:
        counts[CaseLabel(lab).value] += 1
    return counts


def indistinguishable_fraction(labels) -> float:
    labels = list(labels)
    if not labels:
        return float("nan")
    return sum(CaseLabel(x).indistinguishable for x in labels) / len(labels)


@dataclass
class ComparisonReport:
    bon_labels: list[CaseLabel]
    ospo_labels: list[CaseLabel]
    bon_gaps: list[tuple[float, float]]
    ospo_gaps: list[tuple[float, float]]
    ospo_discarded: int
    params: dict = field(default_factory=dict)

    @property
    def bon_fraction(self) -> float:
        return indistinguishable_fraction(self.bon_labels)

    @property
    def ospo_fraction(self) -> float:
        return indistinguishable_fraction(self.ospo_labels)

    @property
    def ratio(self) -> float:
        if self.ospo_fraction == 0:
            return math.inf if self.bon_fraction > 0 else float("nan")
        return self.bon_fraction / self.ospo_fraction

    def summary(self) -> dict:
        return {
            "best_of_n_fraction": self.bon_fraction, "ospo_fraction": self.ospo_fraction, "ratio": self.ratio,
            "best_of_n_cases": case_counts(self.bon_labels), "ospo_cases": case_counts(self.ospo_labels),
            "ospo_discarded": self.ospo_discarded,
            "best_of_n_mean_local_low_global": conditional_mean_local(self.bon_gaps),
            "ospo_mean_local_low_global": conditional_mean_local(self.ospo_gaps),
            **self.params,
        }


def compare_pipelines(prompts, corruption: CorruptionParams, backend, seed: int, n: int = 10,
                      decode: DecodeParams = DecodeParams(), pools: KeywordPools | None = None,
                      epsilon: float = 1e-6, densify_mode: str = "rule") -> ComparisonReport:
    """Indistinguishable-pair rates of Best-of-N pairs and OSPO-selected pairs on the same prompts.

    A discarded OSPO sample is represented by its candidate with the largest
    local gap. Gap lists hold (delta_local, delta_global) per pair; the OSPO
    list only has non-discarded selections.
    """
    prompts = list(prompts)
    pools = pools or backend.pools
    bon = run_best_of_n(prompts, n, decode, corruption, backend, seed)
    bon_labels = [classify_indistinguishable(r.best_answers, r.worst_answers) for r in bon]
    ospo_labels, ospo_gaps, discarded = [], [], 0
    for k, p in enumerate(prompts):
        sid = f"cmp-{k:05d}"
        out = run_sample(sid, p, decompose_questions(p), pools, backend, decode, seed, epsilon, corruption,
                         densify_mode, Ablations())
        kind = representative_kind(out)
        if kind is None:
            continue
        card = out.cards[kind]
        ospo_labels.append(classify_indistinguishable(card_answers(card, "w"), card_answers(card, "l")))
        if out.selection.discarded:
            discarded += 1
        else:
            ospo_gaps.append((card.delta_local, card.delta_global))
    params = {"n": n, "prompts": len(prompts), "seed": seed, "p_omit": corruption.p_omit,
              "p_misbind": corruption.p_misbind, "p_wrong_attr": corruption.p_wrong_attr, "eta": corruption.eta,
              "temperature": decode.temperature}
    return ComparisonReport(bon_labels, ospo_labels, [r.gaps for r in bon], ospo_gaps, discarded, params)


def temperature_sweep(prompts, temperatures, corruption: CorruptionParams, backend, seed: int,
                      n: int = 10) -> dict[float, float]:
    """Best-of-N indistinguishable fraction per sampling temperature."""
    prompts = list(prompts)
    out = {}
    for t in temperatures:
        res = run_best_of_n(prompts, n, DecodeParams(temperature=t), corruption, backend, seed)
        out[t] = indistinguishable_fraction(classify_indistinguishable(r.best_answers, r.worst_answers)
                                            for r in res)
    return out


# ------------------------------------------------------------- gap density

GLOBAL_EDGES = np.linspace(-2.0, 2.0, 17)
LOCAL_EDGES = np.linspace(-2.0, 2.0, 21)


def _bin(value: float, edges: np.ndarray) -> int:
    if not edges[0] <= value <= edges[-1]:
        raise ValueError(f"gap {value} outside [{edges[0]}, {edges[-1]}]")
    return min(int(np.searchsorted(edges, value, side="right")) - 1, len(edges) - 2)


@dataclass
class GapHistogram:
    global_edges: np.ndarray
    local_edges: np.ndarray
    counts: np.ndarray  # (global bins, local bins)

    @property
    def bin_totals(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    @property
    def density(self) -> np.ndarray:
        width = np.diff(self.local_edges)
        totals = self.bin_totals[:, None]
        with np.errstate(invalid="ignore", divide="ignore"):
            d = self.counts / (totals * width[None, :])
        return np.where(totals > 0, d, 0.0)

    def rows(self):
        dens = self.density
        for g in range(self.counts.shape[0]):
            for k in range(self.counts.shape[1]):
                yield (float(self.global_edges[g]), float(self.global_edges[g + 1]), float(self.local_edges[k]),
                       float(self.local_edges[k + 1]), int(self.counts[g, k]), float(dens[g, k]))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["global_lo", "global_hi", "local_lo", "local_hi", "count", "density"])
            for row in self.rows():
                w.writerow([f"{row[0]:.2f}", f"{row[1]:.2f}", f"{row[2]:.2f}", f"{row[3]:.2f}", row[4],
                            f"{row[5]:.6f}"])


def gap_histogram(gaps) -> GapHistogram:
    gaps = list(gaps)
    if not gaps:
        raise EmptyManifest("no gap records to summarize")
    counts = np.zeros((len(GLOBAL_EDGES) - 1, len(LOCAL_EDGES) - 1), dtype=np.int64)
    for dl, dg in gaps:
        counts[_bin(dg, GLOBAL_EDGES), _bin(dl, LOCAL_EDGES)] += 1
    return GapHistogram(GLOBAL_EDGES.copy(), LOCAL_EDGES.copy(), counts)


def gaps_from_records(records) -> list[tuple[float, float]]:
    """(delta_local, delta_global) of each selected pair in a manifest's select records."""
    out = []
    for rec in records:
        if rec.get("stage") != "select":
            continue
        data = rec["data"]
        if data.get("discarded") or data.get("gap") is None:
            continue
        out.append((data["gap"]["delta_local"], data["gap"]["delta_global"]))
    return out


def gap_density_report(source, csv_path=None) -> GapHistogram:
    """Histogram of local gaps within each global-gap bin.

    ``source`` is a list of (delta_local, delta_global) pairs, a list of
    manifest records, or a manifest path.
    """
    if isinstance(source, (str, Path)):
        from ospo.manifest import read_records

        source = read_records(source)
    source = list(source)
    gaps = gaps_from_records(source) if source and isinstance(source[0], dict) else source
    hist = gap_histogram(gaps)
    if csv_path is not None:
        hist.write_csv(csv_path)
    return hist


def conditional_mean_local(gaps, global_below: float = 0.5) -> float:
    sel = [dl for dl, dg in gaps if dg < global_below]
    return math.fsum(sel) / len(sel) if sel else float("nan")


def write_comparison(report: ComparisonReport, out_dir) -> dict:
    """report.md, cases.csv and gap_density.csv (plus the Best-of-N variant) under ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    s = report.summary()
    with open(out_dir / "cases.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["pipeline"] + [c.value for c in CaseLabel] + ["indistinguishable_fraction"])
        w.writerow(["best_of_n"] + list(s["best_of_n_cases"].values()) + [f"{report.bon_fraction:.6f}"])
        w.writerow(["ospo"] + list(s["ospo_cases"].values()) + [f"{report.ospo_fraction:.6f}"])
    files = ["cases.csv"]
    if report.ospo_gaps:
        gap_histogram(report.ospo_gaps).write_csv(out_dir / "gap_density.csv")
        files.append("gap_density.csv")
    if report.bon_gaps:
        gap_histogram(report.bon_gaps).write_csv(out_dir / "gap_density_best_of_n.csv")
        files.append("gap_density_best_of_n.csv")
    lines = ["# Pair comparison", "",
             f"Prompts: {s['prompts']}, N = {s['n']}, seed = {s['seed']}, corruption (omit, misbind, wrong attr, "
             f"eta) = ({s['p_omit']}, {s['p_misbind']}, {s['p_wrong_attr']}, {s['eta']}), temperature "
             f"{s['temperature']}", "",
             "| pipeline | AllYes | AllNo | AllSame | Distinct | indistinguishable |",
             "|---|---|---|---|---|---|"]
    for name, cases, frac in (("Best-of-N", s["best_of_n_cases"], report.bon_fraction),
                              ("OSPO", s["ospo_cases"], report.ospo_fraction)):
        lines.append(f"| {name} | " + " | ".join(str(v) for v in cases.values()) + f" | {frac:.4f} |")
    lines += ["", f"Ratio Best-of-N / OSPO: {report.ratio:.3f}",
              f"OSPO discarded samples: {report.ospo_discarded}", "",
              "Mean local gap over pairs with global gap < 0.5: "
              f"Best-of-N {s['best_of_n_mean_local_low_global']:.4f}, OSPO {s['ospo_mean_local_low_global']:.4f}",
              "", "Files: " + ", ".join(files), ""]
    (out_dir / "report.md").write_text("\n".join(lines))
    return s
