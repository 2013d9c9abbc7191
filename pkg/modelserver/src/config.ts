export interface ServerConfig {
  /** Identifier reported for the embedding backend. */
  embeddingModel: string;
  /** Identifier reported for the generation backend. */
  generatorModel: string;
  /** Output dimension of every embedding vector. */
  dimension: number;
  /** Tokens kept per text before embedding; the rest are dropped and counted. */
  maxTokens: number;
  /** Prompt token limit; longer prompts are rejected, never clipped. */
  contextWindow: number;
  port: number;
  /** Requests allowed in flight plus waiting before 429 responses start. */
  maxPending: number;
  /** Artificial per-request latency in ms; only useful for load tests. */
  delayMs: number;
}

export const DEFAULTS: ServerConfig = {
  embeddingModel: "hash-mean-pool-v1",
  generatorModel: "extractive-overlap-v1",
  dimension: 384,
  maxTokens: 512,
  contextWindow: 4096,
  port: 8900,
  maxPending: 32,
  delayMs: 0,
};

function intVar(name: string, fallback: number): number {
  const raw = process.env[name];
  if (raw === undefined || raw === "") return fallback;
  const value = Number(raw);
  if (!Number.isInteger(value) || value < 0) {
    throw new Error(`${name} must be a non-negative integer, got ${raw}`);
  }
  return value;
}

export function configFromEnv(): ServerConfig {
  const cfg: ServerConfig = {
    ...DEFAULTS,
    dimension: intVar("MODELSERVER_DIMENSION", DEFAULTS.dimension),
    maxTokens: intVar("MODELSERVER_MAX_TOKENS", DEFAULTS.maxTokens),
    contextWindow: intVar("MODELSERVER_CONTEXT_WINDOW", DEFAULTS.contextWindow),
    port: intVar("MODELSERVER_PORT", DEFAULTS.port),
    maxPending: intVar("MODELSERVER_MAX_PENDING", DEFAULTS.maxPending),
    delayMs: intVar("MODELSERVER_DELAY_MS", DEFAULTS.delayMs),
  };
  validateConfig(cfg);
  return cfg;
}

export function validateConfig(cfg: ServerConfig): void {
  if (cfg.dimension < 2) throw new Error("dimension must be >= 2");
  if (cfg.maxTokens < 1) throw new Error("maxTokens must be >= 1");
  if (cfg.contextWindow < 1) throw new Error("contextWindow must be >= 1");
  if (cfg.maxPending < 1) throw new Error("maxPending must be >= 1");
}
