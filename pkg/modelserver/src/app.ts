import express, { type Express, type Request, type Response } from "express";

import { type ServerConfig, validateConfig } from "./config.js";
import { encode } from "./encoder.js";
import { EmptyPromptError, PromptTooLongError, generate } from "./generator.js";

const LEVELS = new Set(["query", "chunk", "context", "metadata", "view"]);

const sleep = (ms: number) => new Promise((r) => setTimeout(r, ms));

export function createApp(cfg: ServerConfig): Express {
  validateConfig(cfg);
  const app = express();
  app.use(express.json({ limit: "16mb" }));

  // Bounded admission: count requests from arrival to response. Inference
  // itself runs on the single JS thread, so it is serialized by
  // construction; the bound only caps memory and queueing delay.
  let pending = 0;
  const admit = (res: Response): boolean => {
    if (pending >= cfg.maxPending) {
      res.status(429).json({ error: "server overloaded, retry later" });
      return false;
    }
    pending += 1;
    return true;
  };

  app.get("/health", (_req: Request, res: Response) => {
    res.json({ status: "ok", dimension: cfg.dimension });
  });

  app.post("/embed", async (req: Request, res: Response) => {
    if (!admit(res)) return;
    try {
      if (cfg.delayMs > 0) await sleep(cfg.delayMs);
      const { level, texts } = req.body ?? {};
      if (typeof level !== "string" || !LEVELS.has(level)) {
        res.status(400).json({ error: `unknown level: ${String(level)}` });
        return;
      }
      if (!Array.isArray(texts) || texts.some((t) => typeof t !== "string")) {
        res.status(400).json({ error: "texts must be an array of strings" });
        return;
      }
      const { vectors, truncated } = encode(texts, level, cfg.dimension, cfg.maxTokens);
      res.setHeader("x-truncated-count", String(truncated));
      res.json({ dimension: cfg.dimension, vectors });
    } finally {
      pending -= 1;
    }
  });

  app.post("/generate", async (req: Request, res: Response) => {
    if (!admit(res)) return;
    try {
      if (cfg.delayMs > 0) await sleep(cfg.delayMs);
      const { prompt, max_new_tokens: maxNew, temperature } = req.body ?? {};
      if (typeof prompt !== "string") {
        res.status(400).json({ error: "prompt must be a string" });
        return;
      }
      if (!Number.isInteger(maxNew) || maxNew < 1) {
        res.status(400).json({ error: "max_new_tokens must be a positive integer" });
        return;
      }
      if (typeof temperature !== "number" || temperature < 0) {
        res.status(400).json({ error: "temperature must be a number >= 0" });
        return;
      }
      let text: string;
      try {
        text = generate(prompt, maxNew, cfg.contextWindow);
      } catch (err) {
        if (err instanceof EmptyPromptError) {
          res.status(400).json({ error: err.message });
          return;
        }
        if (err instanceof PromptTooLongError) {
          res.status(413).json({ error: err.message });
          return;
        }
        throw err;
      }
      res.json({ text });
    } finally {
      pending -= 1;
    }
  });

  return app;
}
