"""Reply schemas for every structured role response.

Replies are JSON objects; each schema id maps to a JSON Schema used both
for validation on receipt and for the repair re-prompt message.
"""

from __future__ import annotations

import jsonschema

QUESTION_LEVELS = [1, 2, 3]

TAXONOMY = [
    "Reasoning",
    "Hypothetical Reasoning",
    "Multi-hop Reasoning",
    "Unanswerable",
    "Image-based Question",
    "Data Retrieval & OCR",
    "Experimental Design",
    "Prediction Analysis",
    "Argumentation",
    "Step-by-step Explanation",
    "Conceptual Understanding",
    "Factual Recall",
]

EVIDENCE_SOURCES = ["text", "table", "chart", "figure", "image"]

VERDICTS = ["correct", "incorrect", "abstain_correct", "abstain_incorrect"]

# Canonical reference answer for questions that are unanswerable from the
# provided pages; judges are instructed to use it verbatim so emitted
# tuples stay uniform.
UNANSWERABLE_TEXT = "Unanswerable: the provided document does not contain this information."

_page_list = {"type": "array", "items": {"type": "integer", "minimum": 1}}

_question_fields = {
    "question_text": {"type": "string", "minLength": 1},
    "cognitive_premise": {"type": "string"},
    "level": {"enum": QUESTION_LEVELS},
    "declared_type": {"enum": TAXONOMY},
    "target_pages": _page_list,
}

SCHEMAS: dict[str, dict] = {
    "suitability": {
        "type": "object",
        "required": ["verdict"],
        "properties": {"verdict": {"enum": ["yes", "no"]}},
    },
    "question_batch": {
        "type": "object",
        "required": ["questions"],
        "properties": {
            "questions": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": sorted(_question_fields),
                    "properties": _question_fields,
                },
            }
        },
    },
    "refined_question": {
        "type": "object",
        "required": sorted(_question_fields),
        "properties": _question_fields,
    },
    "candidate_answer": {
        "type": "object",
        "required": ["answer_text", "logical_foundation", "claimed_evidence_pages", "abstained"],
        "properties": {
            "answer_text": {"type": "string"},
            "logical_foundation": {"type": "string"},
            "claimed_evidence_pages": _page_list,
            "abstained": {"type": "boolean"},
        },
    },
    "judge_report": {
        "type": "object",
        "required": [
            "verdicts",
            "correct_answer",
            "question_type",
            "difficulty_rating",
            "evidence_pages",
            "evidence_sources",
            "feedback",
        ],
        "properties": {
            "verdicts": {
                "type": "array",
                "minItems": 1,
                "items": {
                    "type": "object",
                    "required": ["agent_id", "verdict"],
                    "properties": {
                        "agent_id": {"type": "integer", "minimum": 1},
                        "verdict": {"enum": VERDICTS},
                    },
                },
            },
            "correct_answer": {"type": "string", "minLength": 1},
            "question_type": {"enum": TAXONOMY},
            "difficulty_rating": {"type": "integer", "minimum": 1, "maximum": 5},
            "evidence_pages": _page_list,
            "evidence_sources": {"type": "array", "items": {"enum": EVIDENCE_SOURCES}},
            "feedback": {
                "type": "object",
                "required": ["correct_answer", "attempted_answer", "evaluation", "suggested_refinement"],
                "properties": {
                    "correct_answer": {"type": "string"},
                    "attempted_answer": {"type": "string"},
                    "evaluation": {"type": "string"},
                    "suggested_refinement": {"type": "string"},
                },
            },
        },
    },
    "validation_report": {
        "type": "object",
        "required": ["verdict", "evidence_sources", "evidence_pages", "justification"],
        "properties": {
            "verdict": {"enum": ["confirmed", "mismatch", "unverifiable"]},
            "evidence_sources": {"type": "array", "items": {"enum": EVIDENCE_SOURCES}},
            "evidence_pages": _page_list,
            "justification": {"type": "string"},
        },
    },
}

_validators = {name: jsonschema.Draft202012Validator(schema) for name, schema in SCHEMAS.items()}


def validate_reply(reply: object, schema_id: str) -> str | None:
    """Return None when the reply conforms, else a short error message."""
    validator = _validators.get(schema_id)
    if validator is None:
        raise KeyError(f"unregistered reply schema {schema_id!r}")
    errors = sorted(validator.iter_errors(reply), key=lambda e: e.json_path)
    if not errors:
        return None
    first = errors[0]
    return f"{first.json_path}: {first.message}"
