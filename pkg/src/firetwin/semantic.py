"""Semantic alignment scoring: synthetic oracle or remote service, with the
frame-skip cache that serves stale values between query steps."""

from __future__ import annotations

import base64
import math
from dataclasses import dataclass, field

import numpy as np
import requests

from .sensor import QuadrantPatches, QUADRANT_KEYS, fire_pixel_mask, smoke_pixel_mask, to_png_bytes

DEFAULT_PROMPT = "an aerial image of an active wildfire with smoke plumes"


class ScorerError(RuntimeError):
    """Remote scorer unreachable or speaking the wrong protocol."""


@dataclass
class ScorerConfig:
    prompt: str = DEFAULT_PROMPT
    frame_skip: int = 4
    backend: str = "synthetic"           # synthetic | remote
    endpoint: str = "http://127.0.0.1:8400"
    timeout: float = 2.0

    def validate(self):
        if self.frame_skip < 1:
            raise ValueError("frame_skip must be >= 1")
        if not self.prompt:
            raise ValueError("prompt must be non-empty")
        if self.backend not in ("synthetic", "remote"):
            raise ValueError(f"unknown scorer backend {self.backend!r}")
        return self


@dataclass
class SemanticScore:
    s: float   # alignment in [-1, 1]
    step: int  # query step that produced it


@dataclass
class DirectionalDistribution:
    p: dict           # quadrant key -> probability
    d_star: str       # argmax key, ties resolved in f, b, l, r order

    @classmethod
    def uniform(cls) -> "DirectionalDistribution":
        return cls(p={k: 0.25 for k in QUADRANT_KEYS}, d_star="f")


def synthetic_score(image: np.ndarray) -> float:
    """Deterministic stand-in for a contrastive scorer.

    Logistic in the fire and smoke pixel fractions, centered at zero for a
    clean image: s = 2 / (1 + exp(-(10 f + 5 k))) - 1.
    """
    n = image.shape[0] * image.shape[1]
    f = fire_pixel_mask(image).sum() / n
    k = smoke_pixel_mask(image).sum() / n
    return 2.0 / (1.0 + math.exp(-(10.0 * f + 5.0 * k))) - 1.0


class SyntheticScorer:
    """Local oracle backend. Ignores the prompt but honors the interface."""

    def __init__(self):
        self.calls = 0

    def score_batch(self, images: list[np.ndarray], prompt: str) -> list[float]:
        self.calls += 1
        return [synthetic_score(img) for img in images]


class RemoteScorer:
    """HTTP client for the /v1/score wire protocol."""

    def __init__(self, endpoint: str, timeout: float = 2.0):
        self.endpoint = endpoint.rstrip("/")
        self.timeout = timeout
        self.calls = 0

    def health_check(self) -> bool:
        try:
            resp = requests.get(f"{self.endpoint}/v1/health", timeout=self.timeout)
            return resp.status_code == 200 and resp.json().get("status") == "ok"
        except (requests.RequestException, ValueError):
            return False

    def score_batch(self, images: list[np.ndarray], prompt: str) -> list[float]:
        self.calls += 1
        payload = {
            "prompt": prompt,
            "images": [base64.b64encode(to_png_bytes(img)).decode("ascii")
                       for img in images],
        }
        try:
            resp = requests.post(f"{self.endpoint}/v1/score", json=payload,
                                 timeout=self.timeout)
        except requests.RequestException as exc:
            raise ScorerError(f"scorer request failed: {exc}") from exc
        if resp.status_code != 200:
            raise ScorerError(f"scorer returned HTTP {resp.status_code}")
        try:
            sims = resp.json()["similarities"]
        except (ValueError, KeyError) as exc:
            raise ScorerError("malformed scorer response body") from exc
        if len(sims) != len(images):
            raise ScorerError(
                f"scorer returned {len(sims)} similarities for {len(images)} images")
        sims = [float(s) for s in sims]
        if any(not -1.0 <= s <= 1.0 for s in sims):
            raise ScorerError("similarity outside [-1, 1]")
        return sims


def make_scorer(config: ScorerConfig):
    config.validate()
    if config.backend == "synthetic":
        return SyntheticScorer()
    return RemoteScorer(config.endpoint, timeout=config.timeout)


def score_image(image: np.ndarray, prompt: str, scorer, step: int = 0) -> SemanticScore:
    """Single-image convenience wrapper over the batch interface."""
    s = scorer.score_batch([image], prompt)[0]
    return SemanticScore(s=s, step=step)


def directional_distribution(patches: QuadrantPatches, scorer,
                             prompt: str = DEFAULT_PROMPT) -> DirectionalDistribution:
    """Quadrant probabilities from per-patch scores.

    Scores map to [0, 1] via (s + 1)/2 and normalize to a distribution; the
    all -1 degenerate case falls back to uniform (maximum entropy).
    """
    imgs = [patches.patches[k] for k in QUADRANT_KEYS]
    scores = scorer.score_batch(imgs, prompt)
    return distribution_from_scores(dict(zip(QUADRANT_KEYS, scores)))


def distribution_from_scores(scores: dict) -> DirectionalDistribution:
    shifted = np.array([(scores[k] + 1.0) / 2.0 for k in QUADRANT_KEYS])
    total = shifted.sum()
    if total <= 0.0:
        return DirectionalDistribution.uniform()
    p = shifted / total
    d_star = QUADRANT_KEYS[int(np.argmax(p))]
    return DirectionalDistribution(p=dict(zip(QUADRANT_KEYS, p.tolist())),
                                   d_star=d_star)


@dataclass
class CachedSemantics:
    """Last fresh scorer outputs, reused on skipped or degraded steps."""
    s_angled: SemanticScore | None = None
    s_top: SemanticScore | None = None
    dist: DirectionalDistribution | None = None


class CachedScorer:
    """Frame-skip gate in front of a scorer backend.

    Fresh queries happen only when step % frame_skip == 0; other steps (and
    query steps whose remote call fails) serve the cached values. All images
    needed on a query step go out in one batched request.
    """

    def __init__(self, config: ScorerConfig, scorer=None):
        self.config = config.validate()
        self.scorer = scorer if scorer is not None else make_scorer(config)
        self.cache = CachedSemantics()
        self.degraded_steps = 0

    def reset(self):
        self.cache = CachedSemantics()
        self.degraded_steps = 0

    def query(self, step: int,
              angled: np.ndarray | None = None,
              top: np.ndarray | None = None,
              patches: QuadrantPatches | None = None) -> CachedSemantics:
        if step < 0:
            raise ValueError("step must be >= 0")
        if step % self.config.frame_skip != 0:
            return self.cache
        batch = []
        slots = []
        if angled is not None:
            slots.append(("angled", 1))
            batch.append(angled)
        if top is not None:
            slots.append(("top", 1))
            batch.append(top)
        if patches is not None:
            slots.append(("patches", 4))
            batch.extend(patches.patches[k] for k in QUADRANT_KEYS)
        if not batch:
            return self.cache
        try:
            sims = self.scorer.score_batch(batch, self.config.prompt)
        except ScorerError:
            self.degraded_steps += 1
            return self.cache
        fresh = CachedSemantics()
        i = 0
        for name, width in slots:
            vals = sims[i:i + width]
            i += width
            if name == "angled":
                fresh.s_angled = SemanticScore(s=vals[0], step=step)
            elif name == "top":
                fresh.s_top = SemanticScore(s=vals[0], step=step)
            else:
                fresh.dist = distribution_from_scores(dict(zip(QUADRANT_KEYS, vals)))
        self.cache = fresh
        return fresh
