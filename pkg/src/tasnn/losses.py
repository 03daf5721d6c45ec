"""Loss terms of the hybrid objective and the class-center state."""
import torch
import torch.nn.functional as F

PROB_EPS = 1e-7


def pair_probability(distance, shift):
    """Probability that a pair is same-class: ``sigmoid(shift - distance)``."""
    return torch.sigmoid(shift - distance)


def bce_loss(prob, y_d, eps=PROB_EPS):
    """Binary cross-entropy of pair probabilities against pair labels."""
    prob = torch.as_tensor(prob)
    y_d = torch.as_tensor(y_d, dtype=prob.dtype)
    p = prob.clamp(eps, 1.0 - eps)
    return -(y_d * torch.log(p) + (1.0 - y_d) * torch.log1p(-p)).mean()


def embedding_loss(logits, labels):
    """Mean cross-entropy of per-class scores against integer class labels."""
    logits = torch.as_tensor(logits)
    labels = torch.as_tensor(labels, dtype=torch.long)
    n_classes = logits.shape[-1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"labels must lie in [0, {n_classes})")
    log_probs = F.log_softmax(logits, dim=-1)
    return -log_probs.gather(-1, labels[:, None]).mean()


def center_loss(features, labels, centers):
    """``1/(2N) * sum_i ||f_i - c_{y_i}||^2``.

    ``features`` is (N, D) or (N,) for scalar features; ``centers`` is
    (C, D) or (C,). Centers are constants here; they move by EMA only.
    """
    features = torch.as_tensor(features)
    labels = torch.as_tensor(labels, dtype=torch.long)
    centers = torch.as_tensor(centers, dtype=features.dtype)
    if labels.numel() and (labels.min() < 0 or labels.max() >= centers.shape[0]):
        raise ValueError("label without a center")
    diff = features - centers.detach()[labels]
    if diff.ndim == 1:
        diff = diff[:, None]
    return (diff ** 2).sum() / (2.0 * features.shape[0])


def hybrid_loss(l_e, l_b, l_c, beta, lam):
    """``beta * L_e + (L_b + lam * L_c)``."""
    return beta * l_e + (l_b + lam * l_c)


class ClassCenters:
    """Per-class centers updated by an exponential moving average.

    After a batch, each class seen in it moves its center toward the batch
    mean of that class: ``c <- (1 - alpha) * c + alpha * mean``.
    """

    def __init__(self, n_classes, dim, alpha=0.5, dtype=torch.float32):
        self.alpha = float(alpha)
        self.centers = torch.zeros(n_classes, dim, dtype=dtype)

    @torch.no_grad()
    def update(self, features, labels):
        features = features.detach().to(self.centers.dtype)
        if features.ndim == 1:
            features = features[:, None]
        for c in torch.unique(labels).tolist():
            mean = features[labels == c].mean(dim=0)
            self.centers[c] += self.alpha * (mean - self.centers[c])
        return self.centers

    def loss(self, features, labels):
        return center_loss(features, labels, self.centers)
