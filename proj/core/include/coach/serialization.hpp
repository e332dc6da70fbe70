#pragma once

// Canonical JSON document form for every domain type. Field names follow the
// domain model exactly; unknown fields and invariant breaches are rejected
// with a ParseError naming the offending field.

#include <string>
#include <string_view>

#include "coach/domain.hpp"
#include "coach/errors.hpp"

namespace coach {

#define COACH_DECLARE_JSON(Type)          \
    void to_json(Json& out, const Type& value); \
    void from_json(const Json& in, Type& value)

COACH_DECLARE_JSON(FeedbackContext);
COACH_DECLARE_JSON(FeedbackReport);
COACH_DECLARE_JSON(JudgeVerdict);
COACH_DECLARE_JSON(RefinementConfig);
COACH_DECLARE_JSON(RefinementIteration);
COACH_DECLARE_JSON(RefinementTrace);
COACH_DECLARE_JSON(ToolCall);
COACH_DECLARE_JSON(Observation);
COACH_DECLARE_JSON(TrajectoryStep);
COACH_DECLARE_JSON(Trajectory);
COACH_DECLARE_JSON(InteractiveVerdict);
COACH_DECLARE_JSON(CharSpan);
COACH_DECLARE_JSON(Chunk);
COACH_DECLARE_JSON(LexicalStats);
COACH_DECLARE_JSON(DocumentInfo);
COACH_DECLARE_JSON(CorpusIndex);
COACH_DECLARE_JSON(TopicGraph);
COACH_DECLARE_JSON(BehaviourDescriptor);
COACH_DECLARE_JSON(SteeringRecord);
COACH_DECLARE_JSON(Session);

#undef COACH_DECLARE_JSON

void to_json(Json& out, ComponentKind value);
void from_json(const Json& in, ComponentKind& value);
void to_json(Json& out, RubricCriterion value);
void from_json(const Json& in, RubricCriterion& value);
void to_json(Json& out, QuestionCategory value);
void from_json(const Json& in, QuestionCategory& value);
void to_json(Json& out, QuestionTheme value);
void from_json(const Json& in, QuestionTheme& value);

// Compact canonical text. Object keys are emitted in sorted order, so equal
// values always produce identical bytes.
template <typename T>
std::string to_document(const T& value) {
    Json j = value;
    return j.dump();
}

template <typename T>
T from_document(std::string_view text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    return j.get<T>();
}

}  // namespace coach
