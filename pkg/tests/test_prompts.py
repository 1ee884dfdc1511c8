from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from paratrans.domain import ConfigError, Direction, KnowledgeAsset, LlmProfile
from paratrans.llm import ContextOverflow, ScriptedBackend
from paratrans.prompts import (
    TRUNCATION_MARKER,
    PromptDictionary,
    SummaryCache,
    UnknownDirection,
    assemble_translation_prompt,
    compile_error_prompt,
    describe_source,
    exec_error_prompt,
    summarize_knowledge,
    system_prompt,
    translation_prompt,
)

GOLDEN = Path(__file__).parent / "golden"
OMP_TO_CUDA = Direction("openmp", "cuda")
CUDA_TO_OMP = Direction("cuda", "openmp")
PROFILE = LlmProfile("m", "model", 16384, 4096)


@pytest.fixture(scope="module")
def prompts():
    return PromptDictionary.default()


def golden(name):
    return (GOLDEN / name).read_text()


def test_default_dictionary_matches_golden_files(prompts):
    assert prompts.general_system_prompt == golden("system_general.txt")
    assert system_prompt(prompts, CUDA_TO_OMP) == golden("system_cuda_openmp.txt")
    assert system_prompt(prompts, OMP_TO_CUDA) == golden("system_openmp_cuda.txt")
    assert translation_prompt(prompts, CUDA_TO_OMP) == golden("translate_cuda_openmp.txt")
    assert translation_prompt(prompts, OMP_TO_CUDA) == golden("translate_openmp_cuda.txt")
    err = 'app.cu(3): error: identifier "x" is undefined'
    code = "int main() { return x; }"
    assert compile_error_prompt(prompts, code, "nvcc -o app app.cu", err) == golden("compile_error.txt")
    assert exec_error_prompt(prompts, code, "nvcc -o app app.cu", err) == golden("exec_error.txt")


def test_system_prompt_examples(prompts):
    assert system_prompt(prompts, CUDA_TO_OMP).startswith(
        "You are a professional coding AI assistant that specializes in translating parallelized "
        "CUDA code to C++ code using OpenMP directives.")
    assert "Surround your new generated code with the three characters ```" in system_prompt(prompts, OMP_TO_CUDA)
    with pytest.raises(UnknownDirection):
        system_prompt(prompts, Direction("cuda", "sycl"))


def test_new_direction_is_config_only(tmp_path):
    text = (GOLDEN.parent.parent / "src/paratrans/data/prompts.yaml").read_text()
    text += "\n---\nsource: cuda\ntarget: hip\nsystem: \"S\"\ntranslate: \"T\"\n"
    d = PromptDictionary.from_yaml(text)
    assert system_prompt(d, Direction("cuda", "hip")) == "S"


def test_bad_template_is_rejected():
    text = (GOLDEN.parent.parent / "src/paratrans/data/prompts.yaml").read_text()
    with pytest.raises(ConfigError):
        PromptDictionary.from_yaml(text.replace("{stderr}. Re-factor", "{stdout}. Re-factor", 1))


def test_summarize_knowledge_is_cached(prompts):
    asset = KnowledgeAsset("openmp", "#pragma omp target teams distribute parallel for")
    backend = ScriptedBackend(["OpenMP offload uses target teams."])
    cache = SummaryCache()
    seen = []
    assert summarize_knowledge(backend, PROFILE, prompts, asset, cache, lambda *a: seen.append(a[0])) == \
        "OpenMP offload uses target teams."
    assert summarize_knowledge(backend, PROFILE, prompts, asset, cache) == "OpenMP offload uses target teams."
    assert backend.consumed == 1 and seen == ["knowledge_summary"]
    assert asset.text in backend.requests[0].user_messages[0]


def test_summarize_knowledge_overflow(prompts):
    asset = KnowledgeAsset("cuda", "x" * 4 * 16384)
    backend = ScriptedBackend(["never"])
    with pytest.raises(ContextOverflow):
        summarize_knowledge(backend, PROFILE, prompts, asset, SummaryCache())
    assert backend.consumed == 0


def test_describe_source(prompts):
    backend = ScriptedBackend(["Rotates a square matrix in place."])
    src = "int main() {}\n" * 500
    assert describe_source(backend, PROFILE, prompts, src, "cuda") == "Rotates a square matrix in place."
    assert backend.consumed == 1
    with pytest.raises(ValueError):
        describe_source(backend, PROFILE, prompts, "  \n", "cuda")


def test_assembly_examples(prompts):
    b = assemble_translation_prompt(prompts, "K", "S", "D", "C", OMP_TO_CUDA, PROFILE)
    assert "Generate new code to refactor the following parallelized C++ program written with OpenMP" in b.assembled
    assert "Think carefully before developing the following code that you describe as: D. Now, " in b.assembled
    assert b.assembled.endswith(": C")
    assert b.token_estimate > 0
    b = assemble_translation_prompt(prompts, "K", "S", "D", "C", CUDA_TO_OMP)
    assert "use the 'omp pragma' directive 'target teams'" in b.assembled
    with pytest.raises(ContextOverflow):
        assemble_translation_prompt(prompts, "K", "S", "D", "C", CUDA_TO_OMP, LlmProfile("t", "t", 200, 10))
    with pytest.raises(ValueError):
        assemble_translation_prompt(prompts, "K", "", "D", "C", CUDA_TO_OMP)


part = st.text(alphabet="abcdefghij", min_size=1, max_size=20)


@given(part, part, part, part, st.sampled_from([OMP_TO_CUDA, CUDA_TO_OMP]))
def test_four_part_order(k, s, d, c, direction):
    prompts = PromptDictionary.default()
    k, s, d, c = "K" + k, "S" + s, "D" + d, "C" + c
    a = assemble_translation_prompt(prompts, k, s, d, c, direction).assembled
    tp = translation_prompt(prompts, direction)
    positions = [a.index(k), a.index(s), a.index(d), a.index(tp), a.rindex(c)]
    assert positions == sorted(positions)
    assert a == assemble_translation_prompt(prompts, k, s, d, c, direction).assembled


def test_compile_error_prompt_contains_inputs(prompts):
    p = compile_error_prompt(prompts, "X", "nvcc -o a a.cu", "E")
    assert p.startswith("X\n") and "nvcc -o a a.cu" in p and "compile error: E." in p
    with pytest.raises(ValueError):
        compile_error_prompt(prompts, "X", "nvcc", "")


def test_stderr_truncation_keeps_tail(prompts):
    budget = 100
    stderr = "".join(f"{i:04d}" for i in range(50))  # 200 chars, 2x over budget
    p = compile_error_prompt(prompts, "X", "cc", stderr, max_stderr_chars=budget)
    assert TRUNCATION_MARKER + stderr[-budget:] + ". Re-factor" in p
    assert stderr[:budget] not in p
    assert compile_error_prompt(prompts, "X", "cc", "short", max_stderr_chars=budget).count(TRUNCATION_MARKER) == 0


def test_exec_error_prompt_wording(prompts):
    assert "produced the following execution error: segfault" in exec_error_prompt(prompts, "X", "cc", "segfault")
    assert "execution error: process exited with nonzero status and empty stderr." in \
        exec_error_prompt(prompts, "X", "cc", "")
