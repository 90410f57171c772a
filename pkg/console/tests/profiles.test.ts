import { describe, expect, it } from "vitest";
import { fetchProfiles } from "../src/profiles.js";

function fakeFetch(status: number, body: unknown) {
  const calls: string[] = [];
  const fn = async (url: string) => {
    calls.push(url);
    return {
      ok: status >= 200 && status < 300,
      status,
      json: async () => body,
    };
  };
  return { fn, calls };
}

describe("fetchProfiles", () => {
  it("parses the listing and hits the profiles route", async () => {
    const { fn, calls } = fakeFetch(200, [
      { label: "live", model_name: "synthetic:3", file: "/p/live.json" },
    ]);
    const profiles = await fetchProfiles("http://127.0.0.1:8080", fn);
    expect(calls).toEqual(["http://127.0.0.1:8080/profiles"]);
    expect(profiles).toHaveLength(1);
    expect(profiles[0]?.label).toBe("live");
  });

  it("strips a trailing slash from the base url", async () => {
    const { fn, calls } = fakeFetch(200, []);
    await fetchProfiles("http://127.0.0.1:8080/", fn);
    expect(calls).toEqual(["http://127.0.0.1:8080/profiles"]);
  });

  it("raises on http failure and on shape drift", async () => {
    const { fn } = fakeFetch(500, []);
    await expect(fetchProfiles("http://h", fn)).rejects.toThrow(/HTTP 500/);
    const bad = fakeFetch(200, [{ label: 1 }]);
    await expect(fetchProfiles("http://h", bad.fn)).rejects.toThrow();
  });
});
