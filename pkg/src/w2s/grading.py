"""Final-answer extraction and equivalence grading for model completions.

Extraction scans a completion for the predicted final answer; grading
decides whether that prediction matches the gold answer. Equivalence is
deliberately mechanical: string equality after normalization, plus exact
rational comparison. No computer-algebra simplification is attempted, so
symbolically equal but textually different expressions ("x+1" vs "1+x")
grade as mismatches.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction


class ExtractionMethod(str, Enum):
    BOXED = "boxed"
    ANSWER_MARKER = "answer_marker"
    FINAL_EXPRESSION = "final_expression"
    CHOICE_LETTER = "choice_letter"
    NONE = "none"


class VerdictReason(str, Enum):
    EXACT_MATCH = "exact_match"
    NUMERIC_EQUAL = "numeric_equal"
    RATIONAL_EQUAL = "rational_equal"
    CHOICE_MATCH = "choice_match"
    MISMATCH = "mismatch"
    UNEXTRACTABLE = "unextractable"


@dataclass(frozen=True)
class ExtractedAnswer:
    """Predicted answer span pulled out of a completion."""

    raw_span: str
    normalized: str
    method: ExtractionMethod

    def __post_init__(self) -> None:
        if self.method == ExtractionMethod.NONE and self.normalized:
            raise ValueError("method=none requires an empty normalized answer")


@dataclass(frozen=True)
class Verdict:
    is_correct: bool
    reason: VerdictReason

    def __post_init__(self) -> None:
        if self.reason == VerdictReason.UNEXTRACTABLE and self.is_correct:
            raise ValueError("unextractable predictions are never correct")


FREE_FORM_MATH = "free_form_math"
MULTIPLE_CHOICE = "multiple_choice"

# Relative tolerance for decimal-vs-decimal comparison when neither side is
# an exact rational (trailing-dot decimals and similar edge forms).
FLOAT_REL_TOL = 1e-6

_BOXED_RE = re.compile(r"\\boxed\s*\{")
_ANSWER_MARKER_RE = re.compile(
    r"(?:\bthe\s+)?\b(?:final\s+)?answer\s*(?:is)?\s*[:=]?\s*", re.IGNORECASE
)
# Number / fraction / LaTeX command with argument(s), used for the trailing
# expression fallback on the last nonempty line.
_EXPRESSION_RE = re.compile(
    r"(\\[a-zA-Z]+(?:\{[^{}]*\})+"
    r"|[-+]?\d[\d,]*(?:\.\d+)?(?:/\d+)?%?"
    r"|[-+]?\.\d+)"
)
_CHOICE_LETTER_RE = re.compile(r"\b([A-Da-d])\b")

_TEXT_WRAPPER_RE = re.compile(r"\\(?:text|textbf|textit|textrm|mathrm|mathbf)\s*\{([^{}]*)\}")
_FRAC_BRACED_RE = re.compile(r"\\(?:d|t|c)?frac\s*\{([^{}]*)\}\s*\{([^{}]*)\}")
_FRAC_BARE_RE = re.compile(r"\\(?:d|t|c)?frac\s*(\d)\s*(\d)")
_SQRT_RE = re.compile(r"\\sqrt\s*\{([^{}]*)\}")
_SQRT_BARE_RE = re.compile(r"\\sqrt\s*(\d)")
_THOUSANDS_RE = re.compile(r"(\d),(\d{3})(?!\d)")
_UNARY_PLUS_RE = re.compile(r"(^|[(,/:=])\++")


def extract_answer(text: str, kind: str = FREE_FORM_MATH) -> ExtractedAnswer:
    """Pull the predicted final answer out of a completion.

    Tries, in order: the last boxed marker, the last answer marker
    ("Answer:" / "the answer is"), the final standalone expression on the
    last nonempty line, and, for multiple choice, the last standalone
    choice letter A-D. Returns method=none when nothing is found.
    """
    if text:
        span = _last_boxed_content(text)
        if span is not None:
            return _make(span, ExtractionMethod.BOXED, kind)

        span = _last_answer_marker_span(text)
        if span is not None:
            return _make(span, ExtractionMethod.ANSWER_MARKER, kind)

        span = _final_expression(text)
        if span is not None:
            return _make(span, ExtractionMethod.FINAL_EXPRESSION, kind)

        if kind == MULTIPLE_CHOICE:
            letters = _CHOICE_LETTER_RE.findall(text)
            if letters:
                return _make(letters[-1], ExtractionMethod.CHOICE_LETTER, kind)

    return ExtractedAnswer(raw_span="", normalized="", method=ExtractionMethod.NONE)


def _make(span: str, method: ExtractionMethod, kind: str) -> ExtractedAnswer:
    normalized = normalize(span)
    if not normalized:
        return ExtractedAnswer(raw_span=span, normalized="", method=ExtractionMethod.NONE)
    return ExtractedAnswer(raw_span=span, normalized=normalized, method=method)


def _last_boxed_content(text: str) -> str | None:
    matches = list(_BOXED_RE.finditer(text))
    for match in reversed(matches):
        start = match.end()
        depth = 1
        pos = start
        while pos < len(text) and depth > 0:
            if text[pos] == "{":
                depth += 1
            elif text[pos] == "}":
                depth -= 1
            pos += 1
        if depth == 0:
            return text[start : pos - 1].strip()
    return None


def _last_answer_marker_span(text: str) -> str | None:
    matches = list(_ANSWER_MARKER_RE.finditer(text))
    for match in reversed(matches):
        rest = text[match.end() :]
        line, _, remainder = rest.partition("\n")
        span = line.strip().rstrip(".")
        if not span:
            # "Answer:" at end of line; the answer sits on the next
            # nonempty line.
            for next_line in remainder.splitlines():
                if next_line.strip():
                    span = next_line.strip().rstrip(".")
                    break
        if span:
            return span
    return None


def _final_expression(text: str) -> str | None:
    for line in reversed(text.splitlines()):
        if line.strip():
            matches = _EXPRESSION_RE.findall(line)
            if matches:
                return matches[-1].strip()
            return None
    return None


def normalize(expr: str) -> str:
    """Canonicalize an answer expression for comparison.

    Strips whitespace and LaTeX wrappers, rewrites fractions and roots,
    expands percents, removes thousands separators and unary plus, and
    reduces anything that parses as an exact rational to lowest terms
    ("0.50" -> "1/2"). Single letters are case-folded for choice answers.
    Unparseable expressions pass through stripped-only. Idempotent.
    """
    s = _strip(expr)
    return _canonicalize(s)


def _strip(expr: str) -> str:
    """String/LaTeX normalization without numeric reinterpretation."""
    s = expr.replace("$", "")
    s = s.replace("\\left", "").replace("\\right", "")
    s = s.replace("\\%", "%").replace("\\!", "").replace("\\;", "").replace("\\,", "")
    # Whitespace goes first so later rewrites see canonical spacing and
    # cannot expose new forms on a second pass.
    s = re.sub(r"\s+", "", s)
    # Innermost-first rewrites, iterated to a fixpoint so nested forms
    # (boxed fractions, fractions of fractions) unwind fully.
    for _ in range(16):
        new = _TEXT_WRAPPER_RE.sub(r"\1", s)
        new = re.sub(r"\\boxed\{([^{}]*)\}", r"\1", new)
        new = _FRAC_BRACED_RE.sub(_frac_repl, new)
        if new == s:
            break
        s = new
    s = _FRAC_BARE_RE.sub(r"\1/\2", s)
    s = _SQRT_RE.sub(r"sqrt(\1)", s)
    s = _SQRT_BARE_RE.sub(r"sqrt(\1)", s)
    # Residual commands keep their names, losing only the backslash; the
    # blanket removal also covers escaped braces, so brace removal cannot
    # expose new "\cmd" forms on a second pass.
    s = s.replace("\\", "")
    s = s.replace("{", "").replace("}", "")
    s = s.replace("%", "/100")
    for _ in range(8):
        new = _THOUSANDS_RE.sub(r"\1\2", s)
        if new == s:
            break
        s = new
    s = _UNARY_PLUS_RE.sub(r"\1", s)
    for _ in range(8):
        before = s
        s = s.rstrip(".,;:")
        s = _strip_outer_parens(s)
        if s == before:
            break
    return s


def _strip_outer_parens(s: str) -> str:
    """Drop parentheses that wrap the entire expression."""
    if len(s) < 2 or s[0] != "(" or s[-1] != ")":
        return s
    depth = 0
    for index, ch in enumerate(s):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0 and index != len(s) - 1:
                return s
    return s[1:-1]


def _frac_repl(match: re.Match) -> str:
    num, den = match.group(1), match.group(2)
    if re.search(r"[+\-*/]", num[1:]):
        num = f"({num})"
    if re.search(r"[+\-*/]", den[1:]):
        den = f"({den})"
    return f"{num}/{den}"


def _canonicalize(stripped: str) -> str:
    frac = _as_fraction(stripped)
    if frac is not None:
        return str(frac)
    if len(stripped) == 1 and stripped.isalpha():
        return stripped.casefold()
    return stripped


def _as_fraction(s: str) -> Fraction | None:
    if not s:
        return None
    try:
        return Fraction(s)
    except (ValueError, ZeroDivisionError):
        return None


def _as_float(s: str) -> float | None:
    try:
        value = float(s)
    except (ValueError, OverflowError):
        return None
    if value != value or value in (float("inf"), float("-inf")):
        return None
    return value


def _split_top_level(s: str) -> list[str]:
    """Split on commas not nested inside (), [], or {}."""
    parts = []
    depth = 0
    current = []
    for ch in s:
        if ch in "([{":
            depth += 1
        elif ch in ")]}":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(current))
            current = []
        else:
            current.append(ch)
    parts.append("".join(current))
    return parts


def is_equivalent(pred: ExtractedAnswer, gold: str, kind: str = FREE_FORM_MATH) -> Verdict:
    """Grade a prediction against the gold answer.

    Free-form equivalence is normalized string equality, then exact
    rational equality, then (for decimal forms that are not exact
    rationals) a relative-tolerance float comparison. Multiple choice
    compares letters only. Unextractable predictions grade incorrect.
    """
    if not gold:
        raise ValueError("gold answer must be nonempty")
    if pred.method == ExtractionMethod.NONE or not pred.normalized:
        return Verdict(is_correct=False, reason=VerdictReason.UNEXTRACTABLE)

    if kind == MULTIPLE_CHOICE:
        pred_letter = _choice_letter(pred.normalized, pred.raw_span)
        gold_letter = _choice_letter(normalize(gold), gold)
        if pred_letter is not None and pred_letter == gold_letter:
            return Verdict(is_correct=True, reason=VerdictReason.CHOICE_MATCH)
        return Verdict(is_correct=False, reason=VerdictReason.MISMATCH)

    return _compare(pred.raw_span, gold)


def _compare(pred_raw: str, gold_raw: str) -> Verdict:
    pred_stripped = _strip(pred_raw)
    gold_stripped = _strip(gold_raw)
    if pred_stripped == gold_stripped:
        return Verdict(is_correct=True, reason=VerdictReason.EXACT_MATCH)

    if _canonicalize(pred_stripped) == _canonicalize(gold_stripped):
        if _as_fraction(pred_stripped) is not None or _as_fraction(gold_stripped) is not None:
            return Verdict(is_correct=True, reason=VerdictReason.RATIONAL_EQUAL)
        return Verdict(is_correct=True, reason=VerdictReason.EXACT_MATCH)

    # Element-wise comparison of comma-separated tuples.
    pred_parts = _split_top_level(pred_stripped.strip("()[]"))
    gold_parts = _split_top_level(gold_stripped.strip("()[]"))
    if len(pred_parts) > 1 and len(pred_parts) == len(gold_parts):
        verdicts = [_compare(p, g) for p, g in zip(pred_parts, gold_parts) if p and g]
        if len(verdicts) == len(pred_parts) and all(v.is_correct for v in verdicts):
            reasons = {v.reason for v in verdicts}
            reason = (
                VerdictReason.EXACT_MATCH
                if reasons == {VerdictReason.EXACT_MATCH}
                else VerdictReason.RATIONAL_EQUAL
            )
            return Verdict(is_correct=True, reason=reason)

    if ("." in pred_raw or "." in gold_raw) and (
        _as_fraction(pred_stripped) is None and _as_fraction(gold_stripped) is None
    ):
        pred_val = _as_float(pred_stripped)
        gold_val = _as_float(gold_stripped)
        if pred_val is not None and gold_val is not None:
            scale = max(abs(pred_val), abs(gold_val))
            if abs(pred_val - gold_val) <= FLOAT_REL_TOL * max(scale, 1.0):
                return Verdict(is_correct=True, reason=VerdictReason.NUMERIC_EQUAL)

    return Verdict(is_correct=False, reason=VerdictReason.MISMATCH)


def _choice_letter(normalized: str, raw: str) -> str | None:
    if len(normalized) == 1 and normalized in "abcd":
        return normalized
    letters = _CHOICE_LETTER_RE.findall(raw)
    if letters:
        return letters[-1].casefold()
    return None


def grade(completion: str, gold: str, kind: str = FREE_FORM_MATH) -> tuple[ExtractedAnswer, Verdict]:
    """Extract and grade in one step."""
    extracted = extract_answer(completion, kind)
    return extracted, is_equivalent(extracted, gold, kind)
