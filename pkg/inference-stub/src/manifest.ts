// Manifest loading and validation: image_id -> structural attribute record.
// The label vocabularies are closed; an entry with an unknown key or label
// makes the whole manifest invalid.

import { readFileSync } from 'fs';

const ATTRIBUTE_LABELS: Record<string, readonly string[]> = {
  damage_state: ['damaged', 'undamaged'],
  spalling: ['spalling', 'no_spalling'],
  material: ['concrete', 'steel', 'masonry', 'other'],
  collapse_mode: ['non_collapse', 'partial_collapse', 'global_collapse'],
  component_type: ['beam', 'column', 'wall', 'joint', 'other'],
  damage_level: ['undamaged', 'minor', 'moderate', 'heavy'],
  damage_type: ['flexural', 'shear', 'combined', 'other'],
};

export type AttributeRecord = Partial<Record<string, string>>;

export function validateRecord(imageId: string, record: unknown): AttributeRecord {
  if (typeof record !== 'object' || record === null || Array.isArray(record)) {
    throw new Error(`manifest entry '${imageId}' is not an object`);
  }
  for (const [key, value] of Object.entries(record)) {
    const labels = ATTRIBUTE_LABELS[key];
    if (!labels) {
      throw new Error(`manifest entry '${imageId}' has unknown key '${key}'`);
    }
    if (typeof value !== 'string' || !labels.includes(value)) {
      throw new Error(
        `manifest entry '${imageId}' has unknown ${key} label '${String(value)}'`,
      );
    }
  }
  return record as AttributeRecord;
}

export function parseManifest(text: string): Map<string, AttributeRecord> {
  const raw: unknown = JSON.parse(text);
  if (typeof raw !== 'object' || raw === null || Array.isArray(raw)) {
    throw new Error('manifest must be an object mapping image_id to records');
  }
  const entries = new Map<string, AttributeRecord>();
  for (const [imageId, record] of Object.entries(raw)) {
    entries.set(imageId, validateRecord(imageId, record));
  }
  return entries;
}

export type StoreState = 'unloaded' | 'ready' | 'corrupt';

/**
 * Holds the loaded manifest. Reload builds the replacement map first and
 * swaps it in one assignment, so concurrent requests always see a complete
 * manifest; a failed reload marks the store corrupt rather than serving a
 * partial one.
 */
export class ManifestStore {
  private entries: Map<string, AttributeRecord> | null = null;
  private corrupt = false;

  constructor(public readonly manifestPath: string) {}

  get state(): StoreState {
    if (this.corrupt) return 'corrupt';
    return this.entries === null ? 'unloaded' : 'ready';
  }

  get size(): number {
    return this.entries?.size ?? 0;
  }

  load(): void {
    try {
      const text = readFileSync(this.manifestPath, 'utf-8');
      this.entries = parseManifest(text);
      this.corrupt = false;
    } catch (error) {
      this.corrupt = true;
      throw error;
    }
  }

  lookup(imageId: string): AttributeRecord | undefined {
    return this.entries?.get(imageId);
  }
}
