from minumark.marking.schedule import (
    MarkingAssignment,
    ScheduleError,
    generate_marking_schedule,
    validate_schedule,
)
from minumark.marking.store import (
    AuthorizationError,
    ConflictError,
    ExportReport,
    InvalidStateError,
    MarkingError,
    MarkingService,
    RenderMeta,
    ReviewRecord,
    ServiceConfig,
    TemplateState,
    ValidationFailure,
    record_from_json,
    record_to_json,
    render_image,
)

__all__ = [
    "MarkingAssignment",
    "ScheduleError",
    "generate_marking_schedule",
    "validate_schedule",
    "AuthorizationError",
    "ConflictError",
    "ExportReport",
    "InvalidStateError",
    "MarkingError",
    "MarkingService",
    "RenderMeta",
    "ReviewRecord",
    "ServiceConfig",
    "TemplateState",
    "ValidationFailure",
    "record_from_json",
    "record_to_json",
    "render_image",
]
