"""Fixed prompt strings for the describer and the refinement stage.

These are compared byte-for-byte against golden files in the test suite.
"""

DESCRIBER_SYSTEM_PROMPT = (
    "You are an expert in textual description from a single image. Given an image, "
    "you will provide a concise and accurate description of the content, without "
    "saying 'the image shows' or 'the image depicts' at the start."
)

DESCRIBER_USER_PROMPT = (
    "Write a description for this image in one sentence. You should answer with the "
    "prompt only. Do not insert the first part where you say 'the image shows' or "
    "'the image depicts' in the answer."
)

REFINEMENT_TEMPLATE = (
    "A realistic, high-quality photo of a [d], with clean and correct geometry, "
    "natural lighting, consistent textures, and accurate proportions. No visual "
    "glitches, no distorted shapes, no rendering artifacts. The object appears "
    "physically plausible and professionally photographed, with all structures "
    "logically and realistically aligned."
)

PLACEHOLDER = "[d]"


def refinement_text(description: str) -> str:
    return REFINEMENT_TEMPLATE.replace(PLACEHOLDER, description, 1)


def mock_description(class_name: str) -> str:
    return f"a {class_name}"
