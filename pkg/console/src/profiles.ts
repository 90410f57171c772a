import { Profile, ProfileListSchema } from "./schemas.js";

export type FetchLike = (url: string) => Promise<{
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}>;

// Lists target profiles the engine has loaded; baseUrl is the HTTP root of
// the engine service (http://host:port).
export async function fetchProfiles(
  baseUrl: string,
  fetchFn: FetchLike = fetch,
): Promise<Profile[]> {
  const res = await fetchFn(`${baseUrl.replace(/\/$/, "")}/profiles`);
  if (!res.ok) throw new Error(`profiles request failed: HTTP ${res.status}`);
  return ProfileListSchema.parse(await res.json());
}
