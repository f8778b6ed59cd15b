"""
Source-level confirmation that an application loads a given model.

A candidate source file is parsed into a syntax tree and every call is
compared against a curated list of model-loading signatures. Only a call
whose model argument is the model id (directly or through a module-level
string constant) counts; ids that merely appear in comments, docstrings or
unrelated strings do not.
"""
import ast
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Union

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class UsageSignature:
    callee_name: str
    argument: Union[int, str]

    @property
    def short_name(self) -> str:
        return self.callee_name.rsplit(".", 1)[-1]

    def matches_callee(self, dotted_name: str) -> bool:
        return dotted_name == self.callee_name or dotted_name.endswith("." + self.callee_name)


def load_signatures(path) -> List[UsageSignature]:
    signatures = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            callee, *arguments = line.split()
            if not arguments:
                raise ValueError(f"{path}:{lineno}: signature '{callee}' lists no argument")
            for arg in arguments:
                signatures.append(UsageSignature(callee, int(arg) if arg.isdigit() else arg))
    if not signatures:
        raise ValueError(f"No usage signatures in {path}")
    return signatures


def _dotted_name(node) -> Optional[str]:
    if isinstance(node, ast.Name):
        return node.id
    if isinstance(node, ast.Attribute):
        base = _dotted_name(node.value)
        return f"{base or '<expr>'}.{node.attr}"
    if isinstance(node, ast.Call):
        base = _dotted_name(node.func)
        return f"{base}()" if base else None
    return None


def _string_constants(tree) -> Dict[str, str]:
    """Names bound exactly once, to a string literal."""
    bound: Dict[str, Optional[str]] = {}
    for node in ast.walk(tree):
        if isinstance(node, (ast.Assign, ast.AnnAssign)):
            targets = node.targets if isinstance(node, ast.Assign) else [node.target]
            for target in targets:
                if not isinstance(target, ast.Name):
                    continue
                value = node.value
                literal = value.value if isinstance(value, ast.Constant) and isinstance(value.value, str) else None
                bound[target.id] = literal if target.id not in bound else None
    return {name: value for name, value in bound.items() if value is not None}


def _argument_value(call: ast.Call, argument: Union[int, str], constants: Dict[str, str]) -> Optional[str]:
    node = None
    if isinstance(argument, int):
        if argument < len(call.args) and not any(isinstance(a, ast.Starred) for a in call.args[:argument + 1]):
            node = call.args[argument]
    else:
        for keyword in call.keywords:
            if keyword.arg == argument:
                node = keyword.value
                break
    if isinstance(node, ast.Constant) and isinstance(node.value, str):
        return node.value
    if isinstance(node, ast.Name):
        return constants.get(node.id)
    return None


def _scan_lines(source_text: str, model_id: str, signatures: Iterable[UsageSignature]) -> bool:
    # Fallback for sources that do not parse: the id must be quoted on the
    # same line as a call to a known loader.
    quoted = re.compile(r"(['\"])" + re.escape(model_id) + r"\1")
    names = sorted({s.short_name for s in signatures})
    call = re.compile(r"\b(?:" + "|".join(re.escape(n) for n in names) + r")\s*\(")
    for line in source_text.splitlines():
        if line.lstrip().startswith("#"):
            continue
        if quoted.search(line) and call.search(line):
            return True
    return False


def detect_model_usage(source_text: str, model_id: str, signatures: List[UsageSignature]) -> bool:
    """
    Return True if ``source_text`` calls a model loader with ``model_id``.

    Args:
        source_text (str): Python source of one application file.
        model_id (str): fully-qualified model identifier, e.g. ``org/model-x``.
        signatures (list): UsageSignature entries; must not be empty.
    """
    if not signatures:
        raise ValueError("Usage validation needs at least one signature")
    if not source_text or not model_id or model_id not in source_text:
        return False

    try:
        tree = ast.parse(source_text)
    except (SyntaxError, ValueError) as e:
        logger.debug(f"Unparseable source ({e}); falling back to call-site line scan")
        return _scan_lines(source_text, model_id, signatures)

    constants = _string_constants(tree)
    for node in ast.walk(tree):
        if not isinstance(node, ast.Call):
            continue
        name = _dotted_name(node.func)
        if name is None:
            continue
        for signature in signatures:
            if signature.matches_callee(name) and _argument_value(node, signature.argument, constants) == model_id:
                return True
    return False
