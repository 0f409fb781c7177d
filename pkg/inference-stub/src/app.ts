// HTTP surface: POST /extract returns the manifest's attribute record for an
// image, GET /health reports readiness and the entry count.

import express from 'express';
import type { NextFunction, Request, Response } from 'express';

import { ManifestStore } from './manifest.js';

export interface AppConfig {
  store: ManifestStore;
  latencyMs?: number;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export function createApp({ store, latencyMs = 0 }: AppConfig) {
  const app = express();
  app.use(express.json());

  // Body-parser failures (invalid JSON) are malformed requests, not 400s.
  app.use((err: Error, req: Request, res: Response, next: NextFunction) => {
    if (err instanceof SyntaxError) {
      res.status(422).json({ error: 'request body is not valid JSON' });
      return;
    }
    next(err);
  });

  app.get('/health', (req: Request, res: Response) => {
    if (store.state !== 'ready') {
      res.status(503).json({ status: store.state });
      return;
    }
    res.json({ status: 'ok', images: store.size });
  });

  app.post('/extract', async (req: Request, res: Response) => {
    if (store.state === 'unloaded') {
      res.status(503).json({ error: 'manifest not loaded yet' });
      return;
    }
    if (store.state === 'corrupt') {
      res.status(500).json({ error: 'manifest is corrupt' });
      return;
    }
    const body: unknown = req.body;
    if (typeof body !== 'object' || body === null || Array.isArray(body)) {
      res.status(422).json({ error: 'request body must be a JSON object' });
      return;
    }
    const { image_id: imageId, image_uri: imageUri } = body as Record<string, unknown>;
    if (typeof imageId !== 'string' || imageId.length === 0) {
      res.status(422).json({ error: 'image_id must be a non-empty string' });
      return;
    }
    if (imageUri !== undefined && typeof imageUri !== 'string') {
      res.status(422).json({ error: 'image_uri must be a string when present' });
      return;
    }
    const record = store.lookup(imageId);
    if (record === undefined) {
      res.status(404).json({ error: `unknown image_id '${imageId}'` });
      return;
    }
    if (latencyMs > 0) {
      await sleep(latencyMs);
    }
    res.json(record);
  });

  return app;
}
