"""Independent paired-bootstrap oracle for the significance fixture.

Re-derives the resampling stream (SplitMix64 keyed by seed and resample
index) in pure Python and scores resamples with sacrebleu.
"""
import json
import pathlib

from sacrebleu.metrics import BLEU, CHRF, TER

HERE = pathlib.Path(__file__).resolve().parent
FIX = HERE.parent / "fixtures" / "significance"
M64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(z):
    z = (z + GOLDEN) & M64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
    return z ^ (z >> 31)


class SplitMix64:
    def __init__(self, state):
        self.state = state

    def next(self):
        self.state = (self.state + GOLDEN) & M64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & M64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & M64
        return z ^ (z >> 31)

    def bounded(self, n):
        return (self.next() * n) >> 64


def weights(seed, r, n):
    rng = SplitMix64(mix64(seed ^ mix64(r)))
    w = [0] * n
    for _ in range(n):
        w[rng.bounded(n)] += 1
    return w


def pooled_scorer(metric, hyps, refs):
    stats = metric._extract_corpus_statistics(hyps, [refs])

    def score(w):
        summed = [0] * len(stats[0])
        for wi, st in zip(w, stats):
            for k, v in enumerate(st):
                summed[k] += wi * v
        return metric._compute_score_from_stats(summed).score

    return score


def mean_scorer(values):
    def score(w):
        s = 0.0
        for wi, v in zip(w, values):
            s += float(wi) * v
        return s / len(values)

    return score


def bootstrap(score_a, score_b, sign, n, seed, n_res, alpha):
    deltas = []
    for r in range(n_res):
        w = weights(seed, r, n)
        deltas.append(sign * score_a(w) - sign * score_b(w))
    total = 0.0
    for d in deltas:
        total += d
    wa = sum(d > 0 for d in deltas) / n_res
    wb = sum(d < 0 for d in deltas) / n_res
    p = max(1.0 - max(wa, wb), 1.0 / n_res)
    return {
        "score_a": score_a([1] * n),
        "score_b": score_b([1] * n),
        "delta_mean": total / n_res,
        "win_fraction_a": wa,
        "win_fraction_b": wb,
        "p_value": p,
        "significant": p < alpha,
    }


def main():
    data = json.loads((FIX / "systems.json").read_text())
    segs = sorted(data["segments"], key=lambda s: s["id"])
    n = len(segs)
    refs = [s["ref"] for s in segs]
    seed, n_res, alpha = 42, 1000, 0.05
    out = {"seed": seed, "n_resamples": n_res, "alpha": alpha, "sorted_ids": [s["id"] for s in segs],
           "weights": {str(r): weights(seed, r, n) for r in range(5)}, "results": {}}
    pooled = {
        "bleu": BLEU(smooth_method="none"),
        "chrf": CHRF(),
        "ter": TER(case_sensitive=True),
    }
    for name, metric in pooled.items():
        sign = -1.0 if name == "ter" else 1.0
        sa = pooled_scorer(metric, [s["hyp_a"] for s in segs], refs)
        sb = pooled_scorer(metric, [s["hyp_b"] for s in segs], refs)
        out["results"][name] = bootstrap(sa, sb, sign, n, seed, n_res, alpha)
    for name, sign in (("comet", 1.0), ("metricx", -1.0)):
        sa = mean_scorer([s[name + "_a"] for s in segs])
        sb = mean_scorer([s[name + "_b"] for s in segs])
        out["results"][name] = bootstrap(sa, sb, sign, n, seed, n_res, alpha)
    (FIX / "golden.json").write_text(json.dumps(out, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
