"""Language codes and their reserved id tokens.

Language id tokens look like ``[EN]`` and are appended/prepended around the
encoder/decoder sequences. The registry is passed around explicitly (no
mutable module state) so vocabularies and models stay self-describing.
"""

from __future__ import annotations

from collections.abc import Sequence

DEFAULT_LANGUAGES: tuple[str, ...] = ("en", "zh", "ar")


class UnknownLanguageError(ValueError):
    pass


def lang_id_token(code: str) -> str:
    """Reserved vocabulary token for a language code, e.g. ``en -> [EN]``."""
    if not code or not code.isalpha():
        raise UnknownLanguageError(f"invalid language code: {code!r}")
    return f"[{code.upper()}]"


def require_language(code: str, languages: Sequence[str] = DEFAULT_LANGUAGES) -> str:
    """Return the id token for `code`, or raise listing what is registered."""
    if code not in languages:
        raise UnknownLanguageError(
            f"language {code!r} is not registered (registered: {', '.join(languages)})"
        )
    return lang_id_token(code)
