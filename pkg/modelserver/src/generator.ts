/**
 * Deterministic extractive generator. It reads the assembled prompt the
 * retrieval side produces (instruction line, numbered passages, question
 * line), picks the passage with the highest token overlap with the
 * question, and returns its text clipped to max_new_tokens tokens.
 * Temperature is accepted for wire compatibility; decoding is greedy at
 * any value, so temperature 0 reproducibility holds trivially.
 */

import { tokenize } from "./encoder.js";

const PASSAGE_LINE = /^Passage (\d+): (.*)$/;
const QUESTION_LINE = /^Question: (.*)$/;

export class PromptTooLongError extends Error {}
export class EmptyPromptError extends Error {}

export function generate(
  prompt: string,
  maxNewTokens: number,
  contextWindow: number,
): string {
  if (prompt.trim() === "") {
    throw new EmptyPromptError("prompt is empty");
  }
  const promptTokens = tokenize(prompt);
  if (promptTokens.length > contextWindow) {
    throw new PromptTooLongError(
      `prompt has ${promptTokens.length} tokens, window is ${contextWindow}`,
    );
  }

  const lines = prompt.split("\n");
  const passages: string[] = [];
  let question = "";
  for (const line of lines) {
    const p = PASSAGE_LINE.exec(line);
    if (p) passages.push(p[2]);
    const q = QUESTION_LINE.exec(line);
    if (q) question = q[1];
  }
  if (question === "") {
    // Free-form prompt: treat the last nonempty line as the question.
    const nonEmpty = lines.filter((l) => l.trim() !== "");
    question = nonEmpty[nonEmpty.length - 1];
  }

  const qTokens = new Set(tokenize(question));
  let best = "";
  let bestScore = -1;
  for (const passage of passages) {
    let score = 0;
    for (const tok of tokenize(passage)) if (qTokens.has(tok)) score += 1;
    if (score > bestScore) {
      bestScore = score;
      best = passage;
    }
  }
  // Closed book: no passages to quote, so answer with the question's own
  // content words. Deterministic and obviously not hallucination-free,
  // which is the point of a stub.
  const source = passages.length ? best : question;
  return tokenize(source).slice(0, maxNewTokens).join(" ");
}
