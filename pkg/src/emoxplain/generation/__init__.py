from .backends import ENV_KEY, ENV_URL, ChatCompletionBackend, MockBackend, RetryableError, call_with_retries
from .core import (
    GENERATOR_KINDS,
    BackendConfigError,
    BackendRequestError,
    Clock,
    GenerationCache,
    GenerationError,
    GenerationRecord,
    GeneratorSpec,
    RateLimiter,
    SimulatedClock,
    TransientBackendError,
    prompt_hash,
    records_as_items,
)
from .generator import Generator, generate

__all__ = [
    "ENV_KEY", "ENV_URL", "ChatCompletionBackend", "MockBackend", "RetryableError", "call_with_retries",
    "GENERATOR_KINDS", "BackendConfigError", "BackendRequestError", "Clock", "GenerationCache",
    "GenerationError", "GenerationRecord", "GeneratorSpec", "RateLimiter", "SimulatedClock",
    "TransientBackendError", "prompt_hash", "records_as_items", "Generator", "generate",
]
