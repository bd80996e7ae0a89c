#pragma once

#include "slr/checklist.hpp"
#include "slr/llm.hpp"

namespace slr {

/// Deterministic stand-in for a language model, used by offline runs and
/// demos. Item prompts are scored by how many of the item's keywords appear in
/// the excerpts, quoting the sentence around the first hit. Other prompts get
/// a fixed acknowledgement.
llm::MockProvider::Responder offline_responder(const ChecklistRegistry& registry);

}  // namespace slr
