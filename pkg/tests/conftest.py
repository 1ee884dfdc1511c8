import shutil
from importlib import resources
from pathlib import Path

import pytest
import yaml

from paratrans.domain import KnowledgeAsset, LanguageSpec, LlmProfile, TranslationTask

DESK = Path(str(resources.files("paratrans").joinpath("data/desk")))

needs_gxx = pytest.mark.skipif(shutil.which("g++") is None, reason="g++ not installed")


def desk_code(app: str, lang: str) -> str:
    return (DESK / "apps" / app / f"{lang}.cpp").read_text()


def fenced(code: str, tag: str = "cpp") -> str:
    return f"Here is the translation.\n```{tag}\n{code}\n```\n"


BROKEN_OMP = desk_code("vecadd", "omp").replace("c[i] = a[i] + b[i];", "c[i] = a[i] + undeclared_b[i];")
# Compiles, then aborts at run time.
CRASHING_OMP = desk_code("vecadd", "omp").replace('printf("PASS\\n");', "return 3;")


def serial_spec() -> LanguageSpec:
    return LanguageSpec("serial", ".cpp", "g++ -O2 -std=c++17 -o {out} {src}",
                        knowledge_asset=KnowledgeAsset("serial", (DESK / "knowledge/serial.txt").read_text()))


def omp_spec() -> LanguageSpec:
    return LanguageSpec("omp", ".cpp", "g++ -O2 -std=c++17 -fopenmp -o {out} {src}",
                        knowledge_asset=KnowledgeAsset("omp", (DESK / "knowledge/omp.txt").read_text()),
                        env={"OMP_NUM_THREADS": "2"})


def profile(context_length: int = 16384, max_response_tokens: int = 1024, name: str = "scripted") -> LlmProfile:
    return LlmProfile(name, "test-model", context_length, max_response_tokens)


def vecadd_task(llm: LlmProfile = None, reference: bool = True) -> TranslationTask:
    return TranslationTask(
        app_name="vecadd",
        source=serial_spec(),
        target=omp_spec(),
        source_code=desk_code("vecadd", "serial"),
        llm=llm or profile(),
        runtime_args=("2000",),
        reference_target_code=desk_code("vecadd", "omp") if reference else None,
    )


def write_desk_config(tmp: Path, llms: list[dict], manifest: str = None) -> Path:
    """Copy of the desk config with scripted llm profiles, written into *tmp*."""
    data = yaml.safe_load((DESK / "config.yaml").read_text())
    for lang in data["languages"].values():
        lang["knowledge"] = str(DESK / lang["knowledge"])
    data["prompts"] = str(DESK / "prompts.yaml")
    data["manifest"] = manifest or str(DESK / "suite.yaml")
    data["llms"] = llms
    data["loop"].update(n_runtime_runs=1, compile_timeout_s=60, exec_timeout_s=30)
    path = tmp / "config.yaml"
    path.write_text(yaml.safe_dump(data, sort_keys=False))
    return path


@pytest.fixture
def desk_dir():
    return DESK


STUB_CC = """#!/bin/sh
if grep -q BROKEN "$1"; then
  echo "$1:2: error: use of undeclared identifier 'BROKEN'" >&2
  exit 1
fi
cp "$1" "$2"
"""

GOOD_SCRIPT = "#!/bin/sh\necho \"result: 42.0\"\necho \"Total time: 0.00$$ s\"\n"
BROKEN_SCRIPT = "#!/bin/sh\nBROKEN\n"
EXIT1_SCRIPT = "#!/bin/sh\necho \"segmentation fault (core dumped)\" >&2\nexit 1\n"


def stub_languages(tmp: Path):
    cc = tmp / "stubcc.sh"
    cc.write_text(STUB_CC)
    asset = KnowledgeAsset("stubtgt", "Stub target reference: every program is a POSIX shell script.")
    src = LanguageSpec("stubsrc", ".sh", f"sh {cc} {{src}} {{out}}")
    tgt = LanguageSpec("stubtgt", ".sh", f"sh {cc} {{src}} {{out}}", knowledge_asset=asset)
    return src, tgt


def stub_task(tmp: Path, llm: LlmProfile = None, source_code: str = GOOD_SCRIPT) -> TranslationTask:
    src, tgt = stub_languages(tmp)
    return TranslationTask("stubapp", src, tgt, source_code, llm or profile(), (),
                           reference_target_code=GOOD_SCRIPT)


def stub_prompts():
    from paratrans.prompts import PromptDictionary

    text = resources.files("paratrans").joinpath("data/prompts.yaml").read_text()
    text += ("\n---\nsource: stubsrc\ntarget: stubtgt\n"
             "system: \"You translate stub scripts. Surround your new generated code with the three characters ```.\"\n"
             "translate: \"Generate new code to refactor the following stub script\"\n")
    return PromptDictionary.from_yaml(text)


def desk_replies() -> dict:
    """Scripted replies for the desk suite, serial -> omp: vecadd needs one compile fix, sumsq none."""
    return {
        "vecadd@serial:omp": ["OpenMP splits loops over threads.", "Adds two vectors.",
                              fenced(BROKEN_OMP), fenced(desk_code("vecadd", "omp"))],
        "sumsq@serial:omp": ["OpenMP splits loops over threads.", "Sums squares modulo a prime.",
                             fenced(desk_code("sumsq", "omp"))],
    }


def scripted_llm(name: str = "scripted", replies_by_task: dict = None, **extra) -> dict:
    return {"name": name, "model_id": f"{name}-model", "context_length": 16384, "max_response_tokens": 2048,
            "backend": {"kind": "scripted", "replies_by_task": replies_by_task or desk_replies(), **extra}}


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
