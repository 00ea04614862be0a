import base64
import io
import json
from pathlib import Path

import httpx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from PIL import Image

from conftest import dataset_images
from eegrecon import boosting as B
from eegrecon import prompts as P
from eegrecon.errors import (BadStrength, DescriberUnavailable, EmptyDescription,
                             RemoteMalformedResponse, RemoteTimeout, ValidationError)

FIX = Path(__file__).parent / "fixtures"


def _golden(name):
    return (FIX / name).read_text(encoding="utf-8")


# ---------------------------------------------------------------- prompts

def test_golden_prompts():
    assert P.DESCRIBER_SYSTEM_PROMPT == _golden("describer_system.txt")
    assert P.DESCRIBER_USER_PROMPT == _golden("describer_user.txt")
    assert P.REFINEMENT_TEMPLATE == _golden("refinement_template.txt")
    assert P.REFINEMENT_TEMPLATE.count(P.PLACEHOLDER) == 1


def test_compose_red_sports_car():
    p = B.compose_prompt("red sports car")
    assert p.text == _golden("refinement_red_sports_car.txt")
    assert p.description == "red sports car"


@pytest.mark.parametrize("bad", ["", "   ", "two\nlines", None])
def test_compose_rejects_empty(bad):
    with pytest.raises(EmptyDescription):
        B.compose_prompt(bad)


@given(st.text(st.characters(blacklist_categories=("Cc", "Cs", "Zl", "Zp")), min_size=1)
       .filter(lambda s: s.strip()))
def test_compose_substitutes_once(d):
    pre, post = P.REFINEMENT_TEMPLATE.split(P.PLACEHOLDER)
    text = B.compose_prompt(d).text
    assert text == pre + d + post


@pytest.mark.parametrize("raw,clean", [
    ("A red car on a road.", "A red car on a road"),
    ("  a panda  ", "a panda"),
    ("A dog, e.g. a terrier, on grass.", "A dog, e.g. a terrier, on grass"),
    ("What is this?", "What is this"),
])
def test_validate_description_accepts(raw, clean):
    assert B.validate_description(raw) == clean


@pytest.mark.parametrize("raw", [
    "", "  ", "line one\nline two", "The image shows a cat.", "the image depicts a dog",
    "A cat. A dog.", "...", 42, None])
def test_validate_description_rejects(raw):
    with pytest.raises(RemoteMalformedResponse):
        B.validate_description(raw)


# ------------------------------------------------------------- describers

def test_mock_describer():
    img = np.zeros((4, 4, 3), np.uint8)
    assert B.MockDescriber().describe(img, "panda") == "a panda"
    assert B.MockDescriber().describe_batch([img, img], ["dog", "cat"]) == ["a dog", "a cat"]
    with pytest.raises(DescriberUnavailable):
        B.MockDescriber().describe(img)
    with pytest.raises(ValidationError):
        B.MockDescriber().describe(np.zeros((0, 0, 3), np.uint8), "x")


def _remote(handler, **kw):
    return B.RemoteDescriber(B.RemoteConfig("http://describer.test/describe", **kw),
                             transport=httpx.MockTransport(handler))


def test_remote_request_body():
    seen = []
    img = np.random.default_rng(0).integers(0, 256, (8, 8, 3), dtype=np.uint8)

    def handler(request):
        seen.append(json.loads(request.content))
        return httpx.Response(200, json={"description": "A red square."})

    assert _remote(handler).describe(img) == "A red square"
    body = seen[0]
    assert body["system"] == _golden("describer_system.txt")
    assert body["user"] == _golden("describer_user.txt")
    png = Image.open(io.BytesIO(base64.b64decode(body["image_base64_png"])))
    assert np.array_equal(np.asarray(png), img)


@pytest.mark.parametrize("reply", [
    httpx.Response(200, json={"description": ""}),
    httpx.Response(200, json={"text": "a cat"}),
    httpx.Response(200, content=b"not json"),
    httpx.Response(200, json={"description": "The image shows a cat"}),
])
def test_remote_malformed_is_not_retried(reply):
    calls = []

    def handler(request):
        calls.append(1)
        return reply

    with pytest.raises(RemoteMalformedResponse):
        _remote(handler, retries=3).describe(np.zeros((4, 4, 3), np.uint8))
    assert len(calls) == 1


def test_remote_retries_server_errors():
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) < 3:
            return httpx.Response(503)
        return httpx.Response(200, json={"description": "a dog"})

    assert _remote(handler, retries=2).describe(np.zeros((4, 4, 3), np.uint8)) == "a dog"
    assert len(calls) == 3
    calls.clear()
    with pytest.raises(DescriberUnavailable):
        _remote(handler, retries=1).describe(np.zeros((4, 4, 3), np.uint8))


def test_remote_client_error_is_unavailable():
    with pytest.raises(DescriberUnavailable):
        _remote(lambda r: httpx.Response(404)).describe(np.zeros((4, 4, 3), np.uint8))


def test_remote_timeout():
    calls = []

    def handler(request):
        calls.append(1)
        raise httpx.ReadTimeout("slow", request=request)

    with pytest.raises(RemoteTimeout):
        _remote(handler, retries=2, timeout=0.01).describe(np.zeros((4, 4, 3), np.uint8))
    assert len(calls) == 3


def test_remote_batch_keeps_order():
    def handler(request):
        png = base64.b64decode(json.loads(request.content)["image_base64_png"])
        v = int(np.asarray(Image.open(io.BytesIO(png)))[0, 0, 0])
        return httpx.Response(200, json={"description": f"shade {v}"})

    imgs = [np.full((4, 4, 3), v, np.uint8) for v in range(10)]
    got = _remote(handler, max_concurrency=3).describe_batch(imgs)
    assert got == [f"shade {v}" for v in range(10)]


def test_remote_bad_config():
    with pytest.raises(ValidationError):
        B.RemoteDescriber(B.RemoteConfig("http://x", max_concurrency=0))


# ------------------------------------------------------------------ boost

@pytest.fixture(scope="module")
def raw_images(small_dataset):
    return dataset_images(small_dataset, small_dataset.manifest.splits["test"][:4])


def test_boost_shapes_metadata_and_determinism(toy_engine, raw_images, small_dataset):
    hints = [small_dataset.class_names[k] for k in range(4)]
    out, meta = B.boost(raw_images, B.MockDescriber(), toy_engine, strength=0.4, gamma=4.0,
                        seed=5, steps=10, hints=hints)
    again, _ = B.boost(raw_images, B.MockDescriber(), toy_engine, strength=0.4, gamma=4.0,
                       seed=5, steps=10, hints=hints)
    assert out.shape == raw_images.shape and out.dtype == np.uint8
    assert np.array_equal(out, again)
    assert [m["seed"] for m in meta] == [5, 6, 7, 8]
    assert meta[0]["description"] == "a " + hints[0]
    assert meta[0]["prompt"] == P.refinement_text("a " + hints[0])
    assert {m["describer"] for m in meta} == {"mock"}
    assert all(m["strength"] == 0.4 and m["gamma"] == 4.0 for m in meta)


def test_boost_minimal_strength_is_near_round_trip(toy_engine, raw_images, small_dataset):
    hints = [small_dataset.class_names[0]] * 4
    out, _ = B.boost(raw_images, B.MockDescriber(), toy_engine,
                     strength=1 / toy_engine.config.T, hints=hints)
    d = np.abs(out.astype(int) - toy_engine.roundtrip(raw_images).astype(int))
    assert d.mean() <= 1.0


@pytest.mark.parametrize("s", [0.0, -0.2, 1.5])
def test_boost_bad_strength(toy_engine, raw_images, s):
    with pytest.raises(BadStrength):
        B.boost(raw_images, B.MockDescriber(), toy_engine, strength=s, hints=["x"] * 4)


def test_boost_never_reads_eeg(toy_engine, raw_images, monkeypatch):
    # refinement sees only pixels and prompts: the EEG projector is never called
    def boom(*a, **k):
        raise AssertionError("EEG projector called during boosting")

    monkeypatch.setattr(toy_engine, "project_eeg", boom)
    out, _ = B.boost(raw_images[:1], B.MockDescriber(), toy_engine, steps=3, hints=["x"])
    assert out.shape == raw_images[:1].shape
