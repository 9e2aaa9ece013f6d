"""Generate API pages and build the package."""

# standard
from ast import ImportFrom, parse
from os import getenv
from pathlib import Path
from subprocess import Popen  # nosec
import sys
from typing import Dict, List

PACKAGE = "sgpbft"
# modules that sit outside the package namespace but still get a page
EXTRA_PAGES = {
    "cli": ["main", "build_parser", "sweep_cells", "run_cell", "formulas_table", "max_faults"],
    "plots": ["plot_sweep"],
}


def _public_names(init_file: Path, /):
    """Map each re-exported module to the names `__init__` takes from it."""
    tree = parse(init_file.read_text(encoding="utf-8"), init_file)
    pages: Dict[str, List[str]] = {}
    for node in tree.body:
        if isinstance(node, ImportFrom) and node.module and node.level == 1:
            pages.setdefault(node.module, []).extend(alias.name for alias in node.names)
    return {**pages, **EXTRA_PAGES}


def _write_pages(source: Path, /):
    """Rewrite `docs/api/*.md` as one mkdocstrings block per public name."""
    refs_path = source / "docs/api"
    refs_path.mkdir(exist_ok=True)
    for stale in refs_path.glob("*.md"):
        stale.unlink()
    for module, names in _public_names(source / f"src/{PACKAGE}/__init__.py").items():
        lines = [f"# {module}", ""] + [f"::: {PACKAGE}.{module}.{name}" for name in names]
        (refs_path / f"{module}.md").write_text("\n".join(lines) + "\n", encoding="utf-8")


def generate_documentation(source: Path, /, *, build: bool = True):
    """Refresh the API pages and, unless told otherwise, run `mkdocs build`."""
    _write_pages(source)
    if not build:
        return 0
    mkdocs_build = Popen(("mkdocs", "build"), shell=False)  # nosec
    mkdocs_build.communicate()
    return mkdocs_build.returncode


def package(source: Path, /):
    """Build sdist and wheel."""
    exit_code = generate_documentation(source, build=False)
    if exit_code:
        return exit_code
    if getenv("CI", "false") == "true":
        process = Popen(("./.venv/bin/python", "-m", "build"), shell=False)  # nosec
    else:
        process = Popen(("pdm", "build"), shell=False)  # nosec
    process.communicate()
    return process.returncode


if __name__ == "__main__":
    project_root = Path(__file__).parent.parent.parent
    if len(sys.argv) != 2 or sys.argv[1] not in ("pkg", "doc", "api"):
        print("Expected one of these arguments: `pkg` `doc` or `api`")
        sys.exit(1)
    if sys.argv[1] == "pkg":
        sys.exit(package(project_root))
    sys.exit(generate_documentation(project_root, build=sys.argv[1] == "doc"))
