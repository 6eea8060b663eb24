#!/usr/bin/env python3
"""Regenerates the golden prompt fixtures.

The five template bodies are pulled straight out of the transcription
source's code listings and filled in with the fixture bindings via plain
string substitution, independent of the C++ renderer. Run from anywhere:

    python3 tests/golden/generate.py
"""
import pathlib
import re

HERE = pathlib.Path(__file__).resolve().parent
SOURCE = HERE.parent.parent / "paper.md"

# Listing order: extraction, match, consolidation, memory build,
# tool selection.
NAMES = [
    "pattern_extraction",
    "pattern_match",
    "consolidation",
    "memory_build",
    "tool_select",
]

# One restoration: the listing for the extraction prompt loses the tail of
# the `"tool_acc"` line to a LaTeX comment character; the intended line is
# `"tool_acc": "xx.xx%",`.
RESTORE_FROM = '  "tool_acc": "xx.xx\n'
RESTORE_TO = '  "tool_acc": "xx.xx%",\n'

# Must match the fixtures in tests/test_llm.cpp byte for byte.
BINDINGS = {
    "pattern_extraction": {
        "dataset_text": (
            '{"idx": 1, "reactants": "CCClC", "product": "CCClCOCl", '
            '"label": 1, "prediction": 1}'
        ),
    },
    "pattern_match": {
        "rule_name": '"Cl-marked backbone extension"',
        "rule_explanation": '"The reactants carry a chlorine marker."',
        "example_json": '{"idx": 1, "reactants": "CCClC", "product": "CCClCOCl"}',
    },
    "consolidation": {
        "n_rules": "2",
        "rule_name": "Cl-marked backbone extension",
        "candidates_json": '[{"index": 0, "name": "a"}, {"index": 1, "name": "b"}]',
    },
    "memory_build": {
        "reactants": "CCClC",
        "product": "CCClCOCl",
        "cands_section": 'Candidate tools and their matched rules:\n{"tool":"spec03"}',
        "gold_tool": "spec03",
        "neg_tools_json": '["spec04"]',
        "neg_str": '"spec04"',
    },
    "tool_select": {
        "reactants": "CCClC",
        "product": "CCClCOCl",
        "cands_section": 'Candidate tools and their matched rules:\n{"tool":"spec03"}',
        "conf_hint": "- conf hint line\n",
        "tiebreak": "- tiebreak line\n",
        "demos_section": "\ndemo block\n",
        "allowed_str": '"spec03", "spec04"',
    },
}


def main() -> None:
    text = SOURCE.read_text(encoding="utf-8")
    blocks = re.findall(
        r"\\begin\{lstlisting\}\n(.*?)\\end\{lstlisting\}", text, re.DOTALL
    )
    assert len(blocks) >= len(NAMES), f"expected >= {len(NAMES)} listings"
    # The prompt listings are the last five in the document.
    blocks = blocks[-len(NAMES):]

    for name, body in zip(NAMES, blocks):
        if name == "pattern_extraction":
            assert RESTORE_FROM in body
            body = body.replace(RESTORE_FROM, RESTORE_TO)
        body = body.rstrip("\n")  # the C++ raw literals carry no trailing newline
        for key, value in BINDINGS[name].items():
            body = body.replace("{" + key + "}", value)
        assert not re.search(r"\{[a-z_]+\}", body), f"unbound placeholder in {name}"
        (HERE / f"{name}.txt").write_bytes(body.encode("utf-8"))
        print(f"wrote {name}.txt ({len(body)} bytes)")


if __name__ == "__main__":
    main()
