import { describe, expect, it } from "vitest";

import { ApiClient, ApiError } from "../src/api.js";

function jsonResponse(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { "content-type": "application/json" },
  });
}

describe("ApiClient", () => {
  it("creates sessions with the expected payload", async () => {
    const calls: Array<{ url: string; init?: RequestInit }> = [];
    const client = new ApiClient(
      "",
      async (url, init) => {
        calls.push({ url, init });
        return jsonResponse({ session_id: "s1", survey_id: "v1", n_questions: 25 });
      },
      async () => {},
    );
    const info = await client.createSession("alice");
    expect(info.session_id).toBe("s1");
    expect(calls[0].url).toBe("/api/sessions");
    expect(JSON.parse(calls[0].init!.body as string)).toEqual({ subject_id: "alice" });
  });

  it("retries network failures with the original rt_ms", async () => {
    const bodies: string[] = [];
    let failures = 2;
    const client = new ApiClient(
      "",
      async (_url, init) => {
        bodies.push(init!.body as string);
        if (failures-- > 0) throw new TypeError("network down");
        return jsonResponse({ ok: true });
      },
      async () => {},
    );
    await client.submitResponse("s1", {
      question_id: "q1",
      chosen_option: 3,
      rt_ms: 1200,
    });
    expect(bodies).toHaveLength(3);
    for (const body of bodies) {
      expect(JSON.parse(body).rt_ms).toBe(1200);
    }
  });

  it("does not retry server-rejected submissions", async () => {
    let calls = 0;
    const client = new ApiClient(
      "",
      async () => {
        calls += 1;
        return jsonResponse({ error: "SequencingError", message: "wrong question" }, 409);
      },
      async () => {},
    );
    await expect(
      client.submitResponse("s1", { question_id: "q9", chosen_option: 1, rt_ms: 5 }),
    ).rejects.toThrowError(ApiError);
    expect(calls).toBe(1);
  });

  it("gives up after the retry budget", async () => {
    let calls = 0;
    const client = new ApiClient(
      "",
      async () => {
        calls += 1;
        throw new TypeError("offline");
      },
      async () => {},
      2,
    );
    await expect(
      client.submitResponse("s1", { question_id: "q1", chosen_option: 1, rt_ms: 10 }),
    ).rejects.toThrow("offline");
    expect(calls).toBe(3); // initial + 2 retries
  });

  it("surfaces error details from the service", async () => {
    const client = new ApiClient(
      "",
      async () => jsonResponse({ error: "SurveyExhaustedError", message: "none left" }, 409),
      async () => {},
    );
    await expect(client.createSession("bob")).rejects.toThrow("none left");
  });
});
