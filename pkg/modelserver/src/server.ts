import { createApp } from "./app.js";
import { configFromEnv } from "./config.js";

const cfg = configFromEnv();
const app = createApp(cfg);

app.listen(cfg.port, () => {
  console.log(
    `modelserver listening on :${cfg.port} ` +
      `(embed ${cfg.embeddingModel} d=${cfg.dimension}, ` +
      `generate ${cfg.generatorModel}, window ${cfg.contextWindow})`,
  );
});
