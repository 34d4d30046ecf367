from .builders import (
    PROMPT_MODES,
    FewShotExample,
    PromptSpec,
    build_baseline1_prompt,
    build_few_shot_prompt,
    build_prompt,
    build_zero_shot_prompt,
    render_line,
)
from .parsing import (
    Baseline1ParseError,
    GeneratedLine,
    GenerationParseError,
    ParsedGeneration,
    RejectedLine,
    parse_baseline1_response,
    parse_generation,
    render_generation,
)
from .sampling import MissingFrameError, sample_for_spec, sample_few_shot_frame_aware, sample_few_shot_random
from .templates import TEMPLATE_VERSION, load_template, template_manifest

__all__ = [
    "PROMPT_MODES", "FewShotExample", "PromptSpec", "build_baseline1_prompt", "build_few_shot_prompt",
    "build_prompt", "build_zero_shot_prompt", "render_line", "Baseline1ParseError", "GeneratedLine",
    "GenerationParseError", "ParsedGeneration", "RejectedLine", "parse_baseline1_response",
    "parse_generation", "render_generation", "MissingFrameError", "sample_for_spec",
    "sample_few_shot_frame_aware", "sample_few_shot_random", "TEMPLATE_VERSION", "load_template",
    "template_manifest",
]
