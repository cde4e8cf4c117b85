from .prompts import (
    COMPILE_REPAIR_TEMPLATE,
    MAIN_TEMPLATE,
    SYSTEM_PROMPT,
    TEST_REPAIR_TEMPLATE,
    PromptError,
    build_prompt,
    make_feedback_message,
    postprocess,
    wrap,
)
from .providers import (
    Completion,
    Conversation,
    HttpProvider,
    Message,
    MockProvider,
    MockRule,
    ModelPool,
    Provider,
    Refiner,
    ReplayProvider,
    TranscriptLog,
    UsageRecord,
    read_transcript,
)

__all__ = [
    "COMPILE_REPAIR_TEMPLATE",
    "MAIN_TEMPLATE",
    "SYSTEM_PROMPT",
    "TEST_REPAIR_TEMPLATE",
    "Completion",
    "Conversation",
    "HttpProvider",
    "Message",
    "MockProvider",
    "MockRule",
    "ModelPool",
    "PromptError",
    "Provider",
    "Refiner",
    "ReplayProvider",
    "TranscriptLog",
    "UsageRecord",
    "build_prompt",
    "make_feedback_message",
    "postprocess",
    "read_transcript",
    "wrap",
]
