"""N-way K-shot episodes, prediction, and the evaluation report."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from tasnn.metrics import Confusion, accuracy, auc_roc, pca_projection


class EpisodeError(ValueError):
    pass


@dataclass
class Episode:
    n_way: int
    k_shot: int
    classes: list     # family names; position = class index within the episode
    support: list     # support[c] = k_shot sample indices of classes[c]
    queries: list     # queries[c] = one held-back sample index of classes[c]
    anchor: int       # class index whose query is scored

    @property
    def anchor_query(self):
        return self.queries[self.anchor]

    def sample_indices(self):
        return [i for s in self.support for i in s] + list(self.queries)


def sample_episode(fs, n_way, k_shot, seed):
    """Draw ``n_way`` classes, then ``k_shot`` support + 1 query per class.

    Episodes with one seed are nested across grid cells: the classes are a
    prefix of one class permutation (led by the anchor class) and each
    class's support is a prefix of one sample permutation after its query.
    Every cell still sees uniform draws, but cells compare paired episodes.
    """
    if n_way < 2 or k_shot < 1:
        raise EpisodeError("need n_way >= 2 and k_shot >= 1")
    members = {}
    for i, f in enumerate(fs.families):
        members.setdefault(f, []).append(i)
    names = sorted(members)
    eligible = [f for f in names if len(members[f]) >= k_shot + 1]
    if len(eligible) < n_way:
        raise EpisodeError(
            f"{n_way}-way {k_shot}-shot needs {n_way} classes with >= {k_shot + 1} samples; "
            f"only {len(eligible)} available")
    rng = np.random.default_rng([seed, 0xE915])
    order = [names[j] for j in rng.permutation(len(names))]
    chosen = [f for f in order if f in eligible][:n_way]
    # the anchor leads the permutation; its position within the episode is random
    position = np.random.default_rng([seed, 0xE916, n_way]).permutation(n_way)
    classes = [chosen[j] for j in position]
    support, queries = [], []
    for c in classes:
        pick = np.random.default_rng([seed, 0xE917, names.index(c)]).permutation(members[c])
        queries.append(int(pick[0]))
        support.append([int(i) for i in pick[1:k_shot + 1]])
    return Episode(n_way, k_shot, classes, support, queries, classes.index(chosen[0]))


def episode_seed(seed, i):
    """Seed of episode ``i``; shared by every grid cell so episodes are paired."""
    return int(np.random.default_rng([seed, i]).integers(1 << 62))


@dataclass
class EpisodePrediction:
    predicted: int
    scores: np.ndarray           # similarity per class (negative mean distance)
    distances: np.ndarray        # mean distance per class
    probabilities: np.ndarray    # pair probability per class
    distance_features: np.ndarray  # (n_way, d) mean |h_q - h_s| per class


class EmbeddingCache:
    """Trunk features of every sample in a feature set, computed once."""

    def __init__(self, model, fs, batch_size=64):
        self.model = model
        self.fs = fs
        dtype = model.task_mean.dtype
        chunks = []
        model.eval()
        with torch.no_grad():
            for s in range(0, len(fs), batch_size):
                x = torch.as_tensor(fs.images[s:s + batch_size] / 255.0, dtype=dtype)[:, None]
                chunks.append(model.image_features(x))
        self.trunk = torch.cat(chunks) if chunks else torch.zeros(0)
        self.task = torch.as_tensor(fs.task_features, dtype=dtype)


def predict_episode(ep, cache, query_task="own", support_task="own"):
    """Score the anchor query against every class of ``ep``.

    Each support shot is embedded with its own task feature
    (``support_task="own"``) or with the mean task feature of its class's
    shots (``"mean"``). The query uses its own task feature
    (``query_task="own"``) or, with ``"candidate"``, the support mean of the
    class it is compared to.
    The prediction is the argmax of the scores; ties go to the lowest index.
    """
    model = cache.model
    q = ep.anchor_query
    with torch.no_grad():
        d_all, f_all = [], []
        for sup in ep.support:
            e_c = cache.task[sup].mean(dim=0)
            hs = model.embed_from_trunk(cache.trunk[sup],
                                        cache.task[sup] if support_task == "own" else e_c)
            e_q = cache.task[q] if query_task == "own" else e_c
            hq = model.embed_from_trunk(cache.trunk[q:q + 1], e_q)
            diff = (hq - hs).abs()
            d_all.append(torch.linalg.vector_norm(hq - hs, dim=1).mean())
            f_all.append(diff.mean(dim=0))
        dist = torch.stack(d_all)
        prob = torch.sigmoid(model.shift - dist)
    dist = dist.double().numpy()
    scores = -dist
    return EpisodePrediction(int(np.argmax(scores)), scores, dist,
                             prob.double().numpy(), torch.stack(f_all).double().numpy())


@dataclass
class EvalReport:
    n_way: int
    k_shot: int
    episodes: int
    seed: int
    correct: int
    accuracy: float
    confusion: Confusion
    auc: float
    roc_points: list
    pca_coords: list = field(default_factory=list)   # [(x, y, is_positive_pair)]
    per_episode: list = field(default_factory=list)  # 1/0 correctness

    def to_dict(self):
        return {
            "n_way": self.n_way,
            "k_shot": self.k_shot,
            "episodes": self.episodes,
            "seed": self.seed,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "confusion": self.confusion.to_dict(),
            "auc": self.auc,
            "roc_points": [[a, b] for a, b in self.roc_points],
            "pca_coords": [[x, y, int(p)] for x, y, p in self.pca_coords],
        }


def run_eval(fs, model, n_way, k_shot, m, seed=0, query_task="own", cache=None,
             support_task="own"):
    """Run ``m`` episodes and summarise them.

    Accuracy counts the anchor query of each episode. The confusion matrix
    follows a balanced protocol: even episodes contribute the anchor's
    same-class pair, odd episodes one different-class pair, each decided by
    thresholding the pair probability at 0.5. ROC/AUC and the PCA
    projection use every (anchor, class) pair.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    cache = cache or EmbeddingCache(model, fs)
    rng = np.random.default_rng([seed, n_way, k_shot, 0xC0])
    correct = 0
    outcomes = []
    conf = Confusion()
    scores, labels, feats = [], [], []
    for i in range(m):
        ep = sample_episode(fs, n_way, k_shot, episode_seed(seed, i))
        pred = predict_episode(ep, cache, query_task, support_task)
        hit = int(pred.predicted == ep.anchor)
        correct += hit
        outcomes.append(hit)
        if i % 2 == 0:
            c = ep.anchor
        else:
            others = [j for j in range(n_way) if j != ep.anchor]
            c = others[int(rng.integers(len(others)))]
        conf.add(pred.probabilities[c] >= 0.5, c == ep.anchor)
        for j in range(n_way):
            scores.append(pred.probabilities[j])
            labels.append(int(j == ep.anchor))
            feats.append(pred.distance_features[j])
    auc, roc = auc_roc(np.array(scores), np.array(labels))
    coords = []
    try:
        pca = pca_projection(np.array(feats))
        coords = [(float(x), float(y), bool(l)) for (x, y), l in zip(pca.coords, labels)]
    except ValueError:
        pass
    return EvalReport(n_way, k_shot, m, seed, correct, accuracy(correct, m), conf,
                      float(auc), roc, coords, outcomes)


def variant_pair_probabilities(model, fs, provenance="shuffle", cache=None):
    """Pair probability of every (original, variant) pair of ``provenance`` in ``fs``.

    Each side is embedded with its own task feature. Variants whose original
    is not in ``fs`` are skipped.
    """
    index = {sid: i for i, sid in enumerate(fs.ids)}
    pairs = [(index[o], i) for i, (p, o) in enumerate(zip(fs.provenance, fs.origin))
             if p == provenance and o in index]
    if not pairs:
        return np.zeros(0)
    cache = cache or EmbeddingCache(model, fs)
    a = [p[0] for p in pairs]
    b = [p[1] for p in pairs]
    with torch.no_grad():
        h1 = model.embed_from_trunk(cache.trunk[a], cache.task[a])
        h2 = model.embed_from_trunk(cache.trunk[b], cache.task[b])
        d = torch.linalg.vector_norm(h1 - h2, dim=1)
        return torch.sigmoid(model.shift - d).double().numpy()
