/**
 * Export manifest: CSV with columns `path,class`, one clip per line.
 * A clip path is a directory of netpbm frame images, ordered by filename.
 */

export interface ManifestEntry {
  path: string;
  className: string;
}

export function parseManifest(text: string): ManifestEntry[] {
  const entries: ManifestEntry[] = [];
  const lines = text.split(/\r?\n/);
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (!line || line.startsWith("#")) continue;
    if (i === 0 && line.toLowerCase() === "path,class") continue;
    const comma = line.lastIndexOf(",");
    if (comma <= 0 || comma === line.length - 1) {
      throw new Error(`manifest line ${i + 1}: expected "path,class"`);
    }
    entries.push({
      path: line.slice(0, comma).trim(),
      className: line.slice(comma + 1).trim(),
    });
  }
  if (entries.length === 0) throw new Error("manifest lists no clips");
  return entries;
}
