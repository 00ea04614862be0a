"""Post-reconstruction refinement: describe, compose the refinement prompt,
then re-run the image through img2img at limited strength.

The stage only touches the image, the prompts, the loaded engine weights and
the seed. It never reads EEG data.
"""

from __future__ import annotations

import base64
import io
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol, Sequence

import httpx
import numpy as np
from PIL import Image

from .errors import (
    BadStrength,
    DescriberUnavailable,
    EmptyDescription,
    RemoteMalformedResponse,
    RemoteTimeout,
    ValidationError,
)
from .prompts import (
    DESCRIBER_SYSTEM_PROMPT,
    DESCRIBER_USER_PROMPT,
    PLACEHOLDER,
    REFINEMENT_TEMPLATE,
    mock_description,
)
from .records import StimulusImage

log = logging.getLogger(__name__)

_FORBIDDEN_OPENERS = ("the image shows", "the image depicts")
_ABBREVIATIONS = ("e.g.", "i.e.", "etc.", "vs.", "mr.", "mrs.", "ms.", "dr.", "st.", "no.")
_SENTENCE_END = re.compile(r"[.!?](?=\s|$)")


def _pixels(image) -> np.ndarray:
    return image.pixels if isinstance(image, StimulusImage) else np.asarray(image)


def validate_description(text) -> str:
    """Normalize a describer reply to one sentence without trailing period.

    Rejects empty replies, anything spanning several lines, replies opening
    with "the image shows/depicts", and more than one sentence end once
    common abbreviations are masked.
    """
    if not isinstance(text, str):
        raise RemoteMalformedResponse(f"description is not a string: {type(text).__name__}")
    s = text.strip()
    if not s:
        raise RemoteMalformedResponse("empty description")
    if "\n" in s or "\r" in s:
        raise RemoteMalformedResponse("description spans more than one line")
    if s.lower().startswith(_FORBIDDEN_OPENERS):
        raise RemoteMalformedResponse(f"description starts with a forbidden opener: {s[:30]!r}")
    masked = s.lower()
    for abbr in _ABBREVIATIONS:
        masked = masked.replace(abbr, abbr.replace(".", "_"))
    if len(_SENTENCE_END.findall(masked.rstrip(".!?"))) > 0:
        raise RemoteMalformedResponse("description has more than one sentence")
    s = s.rstrip(".!? ")
    if not s:
        raise RemoteMalformedResponse("description is only punctuation")
    return s


class Describer(Protocol):
    kind: str

    def describe(self, image, hint: str | None = None) -> str: ...

    def describe_batch(self, images, hints: Sequence[str | None] | None = None) -> list[str]: ...


class MockDescriber:
    """Deterministic stand-in: "a <class name>" for the decoder's predicted
    class, passed as ``hint``."""

    kind = "mock"

    def describe(self, image, hint: str | None = None) -> str:
        if _pixels(image).size == 0:
            raise ValidationError("empty image")
        if not hint:
            raise DescriberUnavailable("mock describer needs the predicted class name")
        return validate_description(mock_description(hint))

    def describe_batch(self, images, hints=None) -> list[str]:
        hints = hints if hints is not None else [None] * len(images)
        return [self.describe(im, h) for im, h in zip(images, hints)]


def encode_png(pixels: np.ndarray) -> str:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), "RGB").save(buf, format="PNG")
    return base64.b64encode(buf.getvalue()).decode("ascii")


def request_body(pixels: np.ndarray) -> dict:
    return {"system": DESCRIBER_SYSTEM_PROMPT, "user": DESCRIBER_USER_PROMPT,
            "image_base64_png": encode_png(pixels)}


@dataclass
class RemoteConfig:
    url: str
    timeout: float = 30.0
    retries: int = 2
    max_concurrency: int = 4


class RemoteDescriber:
    """HTTP describer: POST {system, user, image_base64_png} and expect
    200 {description}. Timeouts, transport errors and 5xx replies are retried
    ``retries`` times; malformed replies are not retried."""

    kind = "remote"

    def __init__(self, config: RemoteConfig, transport: httpx.BaseTransport | None = None):
        if config.retries < 0 or config.max_concurrency < 1 or config.timeout <= 0:
            raise ValidationError(f"bad remote describer config: {config}")
        self.config = config
        self._transport = transport

    def _client(self) -> httpx.Client:
        return httpx.Client(timeout=self.config.timeout, transport=self._transport)

    def describe(self, image, hint: str | None = None) -> str:
        pixels = _pixels(image)
        if pixels.size == 0:
            raise ValidationError("empty image")
        body = request_body(pixels)
        last: Exception | None = None
        with self._client() as client:
            for attempt in range(self.config.retries + 1):
                try:
                    resp = client.post(self.config.url, json=body)
                except httpx.TimeoutException as e:
                    last = RemoteTimeout(f"{self.config.url} timed out after {self.config.timeout}s")
                    last.__cause__ = e
                    continue
                except httpx.TransportError as e:
                    last = DescriberUnavailable(f"{self.config.url}: {e}")
                    continue
                if resp.status_code >= 500:
                    last = DescriberUnavailable(f"{self.config.url} returned {resp.status_code}")
                    continue
                if resp.status_code != 200:
                    raise DescriberUnavailable(f"{self.config.url} returned {resp.status_code}")
                try:
                    payload = resp.json()
                except ValueError as e:
                    raise RemoteMalformedResponse("response is not JSON") from e
                if not isinstance(payload, dict) or "description" not in payload:
                    raise RemoteMalformedResponse("response has no 'description' field")
                return validate_description(payload["description"])
            log.warning("describer failed after %d attempts", self.config.retries + 1)
        raise last

    def describe_batch(self, images, hints=None) -> list[str]:
        """Describe images with at most ``max_concurrency`` requests in flight.
        Results keep input order."""
        with ThreadPoolExecutor(self.config.max_concurrency) as pool:
            return list(pool.map(self.describe, images))


@dataclass(frozen=True)
class RefinementPrompt:
    description: str
    text: str


def compose_prompt(d: str) -> RefinementPrompt:
    if d is None or not d.strip():
        raise EmptyDescription("description is empty")
    if "\n" in d or "\r" in d:
        raise EmptyDescription("description must be a single line")
    return RefinementPrompt(d, REFINEMENT_TEMPLATE.replace(PLACEHOLDER, d, 1))


@dataclass
class BoostConfig:
    strength: float = 0.4
    gamma: float = 7.5
    steps: int = 50
    min_strength: float = 0.0  # exclusive lower bound
    max_strength: float = 1.0

    def check(self, strength: float):
        if not (self.min_strength < strength <= self.max_strength):
            raise BadStrength(f"strength {strength} outside ({self.min_strength}, {self.max_strength}]")


def boost(images, describer: Describer, engine, strength: float = 0.4, gamma: float = 7.5,
          seed=0, steps: int = 50, hints: Sequence[str | None] | None = None,
          config: BoostConfig | None = None) -> tuple[np.ndarray, list[dict]]:
    """Refine reconstructions. Returns (images [N, H, W, 3], per-image metadata).

    ``hints`` carries the decoder's predicted class names for the mock
    describer; remote describers ignore them.
    """
    (config or BoostConfig()).check(strength)
    pixels = np.stack([_pixels(im) for im in images]) if isinstance(images, (list, tuple)) \
        else np.asarray(images)
    if pixels.ndim == 3:
        pixels = pixels[None]
    descriptions = describer.describe_batch(list(pixels), hints)
    prompts = [compose_prompt(d) for d in descriptions]
    seeds = [int(seed) + i for i in range(len(pixels))] if np.isscalar(seed) else [int(s) for s in seed]
    out = engine.img2img(pixels, [p.text for p in prompts], strength=strength, gamma=gamma,
                         steps=steps, seed=seeds)
    meta = [{"description": p.description, "prompt": p.text, "strength": strength,
             "gamma": gamma, "steps": steps, "seed": s, "describer": describer.kind}
            for p, s in zip(prompts, seeds)]
    return out, meta
