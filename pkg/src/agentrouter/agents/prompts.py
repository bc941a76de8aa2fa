"""System prompts for the six agent designs and the entity judge."""

from __future__ import annotations

from dataclasses import dataclass

from ..dataio import DESIGNS

BOX = "\\boxed{<answer>}"

NOTE_RULES = f"""Answer rules (apply them strictly):
1. Give the shortest exact entity that answers the question; never more than 10 words.
2. For yes/no questions answer with yes or no and nothing else.
3. Write year ranges as "from XXXX to YYYY", never with a hyphen.
4. No sentences, explanations or verb phrases in the answer itself.
5. Always commit to a best guess and put it on the last line as {BOX}."""

PROMPTS = {
    "raw": f"Answer the question using the context provided.\nPut the final answer on the last line as {BOX}.",
    "cot": (
        "You are a careful question-answering agent that is good at multi-hop reasoning. "
        f"Work through the question step by step using the context, then put the final answer on the last line as {BOX}."
    ),
    "react": (
        "You are a careful question-answering agent that is good at multi-hop reasoning.\n"
        "Plan which facts from the context must be chained together, follow that plan, "
        f"and finish with a short answer on the last line as {BOX}."
    ),
    "reflect": (
        "You review the answer another question-answering agent gave.\n"
        "Check it against the question, the context and the answer rules.\n"
        "End your review with exactly one status line:\n"
        '  "Status: revise" when the answer is wrong or incomplete, preceded by a short "Feedback: ..." line;\n'
        '  "Status: final" when the answer is correct and complete.'
    ),
    "debater_a": (
        "You are Debater A. Propose the single most plausible answer from the context.\n"
        "  - State one candidate answer.\n"
        "  - Back it with one or two short verbatim quotes and name the reasoning hops.\n"
        "  - Connect the quotes in at most two sentences.\n"
        "Use only the context and keep it short. Do not give a boxed answer."
    ),
    "debater_b": (
        "You are Debater B. Challenge Debater A's claim using only the context.\n"
        "  - Point out weak or missing quotes and hops, and correct them.\n"
        "  - If a better candidate exists, give it with one or two short quotes.\n"
        "  - If A holds up, confirm it and add one check A skipped.\n"
        "Keep it short. Do not give a boxed answer."
    ),
    "judge": (
        "You are the Judge. Weigh the arguments of Debater A and Debater B and choose the best answer "
        "supported by the context. If the evidence is thin, still make the best guess.\n"
        "Reply with nothing but the final answer as \\boxed{}."
    ),
    "think_a": (
        "You are a careful question-answering agent that is good at multi-hop reasoning.\n"
        "Chain facts from the context step by step. Report a single-entity answer and a brief justification."
    ),
    "think_b": (
        "You are an independent question-answering agent that is good at multi-hop reasoning.\n"
        "Chain facts from the context step by step. Report a single-entity answer and a brief justification."
    ),
    "summarize": (
        "You combine the work of two other agents, A and B, treating their outputs as evidence only.\n"
        "If both give the same short span, return it; otherwise decide with your own reasoning.\n"
        f"Finish with the short final answer on the last line as {BOX}."
    ),
    "entity_judge": (
        "You decide which context entities an agent should be responsible for.\n"
        "You see the question, the entities (labelled E1, E2, ...) with the relations between them, "
        "and the agent's profile. Score every entity from 0 to 1 for how relevant it is to this agent "
        'answering the question. Reply with a JSON object such as {"E1": 0.9, "E2": 0.1}.'
    ),
}

# the entity judge is not an answering agent, so it gets no answer rules
_UNBOXED_ROLES = frozenset({"entity_judge"})

DESIGN_ROLES = {
    "raw": ("raw",),
    "cot": ("cot",),
    "sc": ("cot",),
    "react_reflect": ("react", "reflect"),
    "mad": ("debater_a", "debater_b", "judge"),
    "summary": ("think_a", "think_b", "summarize"),
}


@dataclass(frozen=True)
class PromptBundle:
    design: str
    role: str
    system_text: str
    note_rules: str
    question: str
    context: str

    def messages(self, extra_sections=()) -> list[dict]:
        """System message, then a user message that ends with the answer rules."""
        user = [f"Question: {self.question}", f"Context: {self.context}"]
        user.extend(f"{title}:\n{body}" for title, body in extra_sections)
        if self.note_rules:
            user.append(self.note_rules)
        return [{"role": "system", "content": self.system_text},
                {"role": "user", "content": "\n\n".join(user)}]


def design_roles(design: str) -> tuple[str, ...]:
    if design not in DESIGN_ROLES:
        raise ValueError(f"unknown agent design {design!r}; expected one of {', '.join(DESIGNS)}")
    return DESIGN_ROLES[design]


def bundle(design: str, role: str, record) -> PromptBundle:
    if role not in design_roles(design) and role != "entity_judge":
        raise ValueError(f"design {design!r} has no role {role!r}")
    note = "" if role in _UNBOXED_ROLES else NOTE_RULES
    return PromptBundle(design, role, PROMPTS[role], note, record.question, record.context)


def render_prompt(design: str, record, role: str | None = None, extra_sections=()) -> list[dict]:
    """Chat messages for one call of ``design`` (its first role unless ``role`` is given)."""
    role = role or design_roles(design)[0]
    return bundle(design, role, record).messages(extra_sections)


def role_of(system_text: str) -> str | None:
    """Inverse of rendering: which role produced this system message."""
    for role, text in PROMPTS.items():
        if system_text == text:
            return role
    return None
