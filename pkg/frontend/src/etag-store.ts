/**
 * Last known ETag per session, for optimistic concurrency.
 * The server rejects outcome posts whose If-Match is stale (409).
 */
const etags = new Map<string, string>();

export function setEtag(sessionId: string, etag: string): void {
  etags.set(sessionId, etag);
}

export function getEtag(sessionId: string): string | undefined {
  return etags.get(sessionId);
}

export function clearEtag(sessionId: string): void {
  etags.delete(sessionId);
}
