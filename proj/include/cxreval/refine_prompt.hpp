// SPDX-License-Identifier: Apache-2.0
#pragma once

namespace cxreval {

// Instruction block sent ahead of each report by the LLM refinement client.
inline constexpr const char* kRefinePrompt = R"(You are skillful radiologist and doing summarization of chest x-ray report.
Summarize these information from the report.
Answer to each questions as json format which have "standard report", "conclusion" and "recommendation" as keys.

1. "standard_report" : Write a standardized radiologic report as one paragraph. Standardized report must include information about abnormality of lungs, mediastinum, heart and thorax.
2. "conclusion" : What is the conclusion or impression of the radiologic report? Include only critical information.
3. "recommendation" : Should additional radiologic study needed? What type of study should be performed?

Do not include any temporal or time information in standard_report and conclusion. DO NOT USE WORD SUCH AS "new", "previous", "comparison", "stable", "improved", "improving", "decreased", "increased", "changed", "unchanged", "resolved", or "cleared".
Do not include information about 'comparison with prior study'.
Do not include information about lateral radiograph.
Replace any numeric information, such as millimeter or centimeter
Remove any information about patient age, gender, and medical history.
Remove any under-bar & blank.
Remove any information or location about catheter, chest tube, endotracheal tube, PICC, chemoport, central line, nasogastric tube or other medical devices.)";

// Appended to kRefinePrompt when question/answer generation is requested.
inline constexpr const char* kQaPrompt = R"("question1" : Compose a question from the perspective of a student radiologist, inquiring about the anatomical location, number, or presence of pathology in the chest radiograph.
"answer1" : Write an informative answer to question1.
"question2" : Compose a question that asks possible differential diagnoses from this chest radiograph, without referring to the patient's history.
"answer2" : Write an informative answer to question2.)";

} // namespace cxreval
