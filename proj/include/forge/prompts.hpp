#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "forge/jsonl.hpp"
#include "forge/util.hpp"

namespace forge {

// A placeholder slot is {NAME} with NAME in upper snake case. Braces that
// do not fit that shape ("{{your explanation}}") are literal text.
struct Template {
  std::string name;
  std::string body;
  std::set<std::string> required_placeholders;

  static std::set<std::string> scan_placeholders(std::string_view body) {
    std::set<std::string> found;
    for (size_t i = 0; i < body.size(); ++i) {
      if (body[i] != '{') continue;
      size_t j = i + 1;
      if (j >= body.size() || body[j] < 'A' || body[j] > 'Z') continue;
      while (j < body.size() &&
             ((body[j] >= 'A' && body[j] <= 'Z') ||
              (body[j] >= '0' && body[j] <= '9') || body[j] == '_'))
        ++j;
      if (j < body.size() && body[j] == '}')
        found.insert(std::string(body.substr(i + 1, j - i - 1)));
    }
    return found;
  }

  static Template make(std::string name, std::string body) {
    Template t;
    t.name = std::move(name);
    t.body = std::move(body);
    t.required_placeholders = scan_placeholders(t.body);
    return t;
  }
};

// Substitutes every {NAME} slot. Bindings must cover the required set
// exactly; anything missing or extra is a TemplateError.
inline std::string render(const Template& tpl,
                          const std::map<std::string, std::string>& bindings) {
  std::set<std::string> missing, extra;
  for (const auto& name : tpl.required_placeholders)
    if (!bindings.count(name)) missing.insert(name);
  for (const auto& [name, _] : bindings)
    if (!tpl.required_placeholders.count(name)) extra.insert(name);
  if (!missing.empty() || !extra.empty()) {
    std::string msg = "template '" + tpl.name + "':";
    for (const auto& m : missing) msg += " missing {" + m + "}";
    for (const auto& e : extra) msg += " extra {" + e + "}";
    throw TemplateError(msg);
  }

  std::string out;
  out.reserve(tpl.body.size());
  for (size_t i = 0; i < tpl.body.size();) {
    if (tpl.body[i] == '{') {
      size_t j = i + 1;
      while (j < tpl.body.size() &&
             ((tpl.body[j] >= 'A' && tpl.body[j] <= 'Z') ||
              (tpl.body[j] >= '0' && tpl.body[j] <= '9') || tpl.body[j] == '_'))
        ++j;
      if (j > i + 1 && j < tpl.body.size() && tpl.body[j] == '}' &&
          tpl.body[i + 1] >= 'A' && tpl.body[i + 1] <= 'Z') {
        std::string name(tpl.body.substr(i + 1, j - i - 1));
        auto it = bindings.find(name);
        if (it != bindings.end()) {
          out += it->second;
          i = j + 1;
          continue;
        }
      }
    }
    out.push_back(tpl.body[i]);
    ++i;
  }
  return out;
}

namespace builtin_templates {

inline const char* cot_generation =
    R"TPL(The following are multiple choice questions about medical knowledge. Solve them in a step-by-step fashion, starting by summarizing the available information. Output your explanation and single option from the given options as the final answer. You are required to use the phrase "the answer is" at the end of your response. See the below example.

## Answer: {{your step-by-step explanation here}}. Therefore, the answer is (D) {{answer string}}.

This is the input question to solve.

## Question: {INPUT_QUESTION}

## Answer:
)TPL";

inline const char* qa_generation =
    R"TPL(You are an expert in writing questions on the U.S. medical licensing exam. We will provide you with a reference material excerpted from a textbook. You should extract essential medical concepts (i.e., named entities, phrases, quantities, sentences, or their combinations) potentially relevant to the exam from the reference material and use them as the correct answer by modifying or combining them appropriately.

Subsequently, you should write a case representation--a brief description of a patient (e.g., demographic information, signs/symptoms, conditions)--along with a relevant question alined with the correct answer. Each question should be accompanied by a correct answer and three candidate answers, all of which should be connected to the correct answer and carefully designed to be plausible, while not demanding excessively specific medical knowledge. Additionally, it is essential that questions should not be readily answered solely by referencing the given context but answerable with an explanation derived from authoritative sources such as textbooks, guidelines, and journal articles. It is also important to note that the reference, being a section of the textbook, may not always offer useful or pertinent information. In such cases, do not formulate a question.

We provide three examples below for better understanding.

"question and options": {MEDQA_QUESTION_1}
"answer": {ANSWER_1}

"question and options": {MEDQA_QUESTION_2}
"answer": {ANSWER_2}

"question and options": {MEDQA_QUESTION_3}
"answer": {ANSWER_3}

You are required to produce either "N/A" or a JSON without including any other responses. If the reference does not contain a suitable medical concept, respond with "N/A." Otherwise, the output should be organized following the JSON format (write only ONE question):

json{"question": QUESTION, "options": {"A": OPT, "B": OPT, ...}, "explanation": {your_explanation}, "answer": ANSWER}

This is the input reference:
{TEXTBOOK_CHUNK}
)TPL";

inline const char* chatdoctor_cleaning =
    R"TPL(Your task is to refine responses to patient inquiries gathered from an online medical consultation platform to mirror the natural communication style of a practicing healthcare expert. You also should remove noise from responses, including patients' or doctors' names, unintended text generated during data crawling, and mentions of specific platforms (e.g., Chat Doctor). Refer to the following examples.

Original text: Dear Friend. Welcome to Chat Doctor. I am Chat Doctor. I understand your concern. Recurring yeast / final infection occur due to:1. Improper treatment.2. Inadequate treatment3. Wrong diagnosis.4. Not treating the partner. I would advise you to get a Urine examination done for bacteria and fungus. When the reports are available, get treated. Also, treat your partner. This is my personal opinion for you based on available details. If you have any further query please ask me. Stay HealthyChatDoctor, MD

Modified text: I understand your concern regarding recurrent yeast/fungal infections. Several factors can contribute to this issue, including improper or inadequate treatment, misdiagnosis, or failure to treat the partner. I recommend getting a urine examination done to check for bacteria and fungus. Once the reports are available, appropriate treatment can be initiated. It's also important to ensure that your partner receives treatment if necessary. Please note that this advice is based on the information provided. If you have any further questions or concerns, feel free to ask. Take care and stay healthy.

Original text: Hi, dairy have gone through your question. I can understand your concern.... She has well differentiated keratinizing squamous cell carcinoma.  If her general health is good then treatment of choice is wide excision of carcinoma followed by chemotherapy or radiotherapy if needed. Consult your doctor and take treatment accordingly. Hope I have answered your question, if you have doubt then I will be happy to answer. Thanks for using Chat Doctor. Wish you a very good health.

Modified text: I've reviewed your inquiry and understand your concern. It appears she has well-differentiated keratinizing squamous cell carcinoma. If her overall health is good, the preferred treatment is wide excision of the carcinoma, followed by chemotherapy or radiotherapy if necessary. I recommend consulting with your doctor to discuss treatment options and proceed accordingly. If you have any further questions or doubts, feel free to ask. Wishing you good health.

Original text: Thank you for using Chat Doctor. I would suggest that you see your doctor. Your baby maybe having bronchiolitis which is a lung infection common to your kids age. It is commonly caused by a virus. Albuterol via nebulization should be utilized in order to alleviate the wheezing and also help with the congestion. A decongestant can also be used for the colds. Also, it would also advise doing a chest X-ray in order to rule out other diseases (ex. pneumonia)sincerely, Mark RosarioGeneral pediatrics/Pediatric Pulmonology

Modified text: It sounds like your baby might be experiencing bronchiolitis, a common lung infection among children of their age, typically caused by a virus. To help alleviate the wheezing and congestion, I recommend using Albuterol through nebulization. Additionally, a decongestant can be beneficial for managing cold symptoms. Considering the situation, it would be prudent to consult with your doctor for further evaluation. They may suggest a chest X-ray to rule out other potential conditions, such as pneumonia. Take care.

Here's the target text: {ORIGINAL_RESPONSE}

*Please make sure to thoroughly remove all mentions of "Chat Doctor" and person names (e.g., Dear John) from the target text. Also, expressions like "thank you for your query" and "thank you for consulting with us" are awkward in genuine patient-doctor conversations because these expressions are more appropriate on online platforms; therefore, just remove them or replace them with different expressions that feel more natural and convey empathy. Your response:
)TPL";

inline const char* dialogue_generation =
    R"TPL(Your task is to transform a provided question and answer into a dialogue between a patient, a patient's guardian, student, or researcher (hereinafter referred to "Person A") and a doctor or healthcare professional (hereinafter referred to "Person B"). Person A will communicate their symptoms, medical history, and, if relevant, demographic details. Person B will guide the conversation, probing for additional information when necessary. You have the option to compose a concise, single-turn conversation if the patient's input is comprehensive. However, if essential details are missing, Person B should engage in a multi-turn dialogue, asking follow-up questions to gather a thorough medical history and records. The presumption is that Person B possesses no prior information about Person A, including vital signs such as temperature and blood pressure, until Person A discloses it during the conversation. Additionally, Person B must prioritize conveying crucial information about the correct option. Person B can additionally discuss other options if Person A explicitly inquires about them. Person A does not need to provide an introduction and his/her name to Person B. Person B can lead the conversation without feeling the need to respond to every statement from Person A. The dialogue always starts with Person A and ends with Person B.

Here's the input question and answer.

Question: {MEDQA_QUESTION}

Answer: {ANSWER_WITH_COT}
)TPL";

inline const char* nli_judge =
    R"TPL(You are a careful clinical fact checker. Decide whether the premise entails the hypothesis, contradicts it, or does neither. Judge only what the premise states or clearly implies; do not use outside knowledge to fill gaps.

Premise: {PREMISE}

Hypothesis: {HYPOTHESIS}

Reply with exactly one word: ENTAILS, CONTRADICTS, or NEUTRAL.
)TPL";

inline const char* explanation_rubric =
    R"TPL(You are grading a candidate explanation for a medical exam question against a reference explanation written by an expert. Assume the reference explanation deserves a score of 5. Grade the candidate on completeness, accuracy, clarity, relevance, and logical coherence.

Question: {QUESTION}

Reference explanation: {REFERENCE_EXPLANATION}

Candidate explanation: {CANDIDATE_EXPLANATION}

Reply with a single integer from 1 to 5 and nothing else.
)TPL";

}  // namespace builtin_templates

class PromptLibrary {
public:
  static const std::vector<std::string>& template_names() {
    static const std::vector<std::string> names = {
        "cot_generation",     "qa_generation", "chatdoctor_cleaning",
        "dialogue_generation", "nli_judge",     "explanation_rubric"};
    return names;
  }

  // The compiled-in prompt set. Bodies are identical to the text assets
  // under templates/.
  static PromptLibrary builtin() {
    PromptLibrary lib;
    lib.add(Template::make("cot_generation", builtin_templates::cot_generation));
    lib.add(Template::make("qa_generation", builtin_templates::qa_generation));
    lib.add(Template::make("chatdoctor_cleaning",
                           builtin_templates::chatdoctor_cleaning));
    lib.add(Template::make("dialogue_generation",
                           builtin_templates::dialogue_generation));
    lib.add(Template::make("nli_judge", builtin_templates::nli_judge));
    lib.add(Template::make("explanation_rubric",
                           builtin_templates::explanation_rubric));
    return lib;
  }

  // Loads <name>.txt for every known template name from dir.
  static PromptLibrary load_dir(const fs::path& dir) {
    PromptLibrary lib;
    for (const auto& name : template_names()) {
      fs::path p = dir / (name + ".txt");
      if (!fs::exists(p))
        throw TemplateError("missing template file: " + p.string());
      lib.add(Template::make(name, read_file(p)));
    }
    return lib;
  }

  const Template& get(const std::string& name) const {
    auto it = templates_.find(name);
    if (it == templates_.end())
      throw TemplateError("unknown template: " + name);
    return it->second;
  }

  void add(Template t) { templates_[t.name] = std::move(t); }

private:
  std::map<std::string, Template> templates_;
};

}  // namespace forge
