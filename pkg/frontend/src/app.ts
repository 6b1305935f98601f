/** Browser entry: wires the session state machine to the DOM.
 *
 * Layout: a textarea for shorthand text, a mark button that wraps the
 * current selection as [ABB:<text>], one card per slot listing the
 * server-ranked candidates (rank, expansion, cosine score), a free-text
 * correction box, and the personalize button with the adapter-version
 * badge.  Rendering preserves server order exactly.
 */

import { ApiClient } from "./api.js";
import { Session, type SessionSnapshot } from "./session.js";
import type { JsonSchema } from "./schema.js";

async function loadFeedbackSchema(baseUrl: string): Promise<JsonSchema> {
  const response = await fetch(`${baseUrl}/openapi.json`);
  const spec = (await response.json()) as {
    components: { schemas: Record<string, JsonSchema> };
  };
  return spec.components.schemas["FeedbackRequest"];
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export async function startApp(root: HTMLElement, baseUrl = ""): Promise<Session> {
  const api = new ApiClient(baseUrl);
  const params = new URLSearchParams(window.location.search);
  const profile = params.get("profile") ?? "default";

  const header = el("header");
  header.append(el("h1", "", "abbrank annotation console"));
  const badge = el("span", "badge", "adapter v0");
  const profileLabel = el("span", "profile", `profile: ${profile}`);
  header.append(profileLabel, badge);

  const editor = el("textarea", "editor") as HTMLTextAreaElement;
  editor.rows = 4;
  editor.placeholder = "type or paste shorthand text, select a short form, mark it";

  const markButton = el("button", "", "mark selection") as HTMLButtonElement;
  const expandButton = el("button", "", "rank expansions") as HTMLButtonElement;
  const personalizeButton = el("button", "", "personalize") as HTMLButtonElement;
  const statusLine = el("div", "status", "ready");
  const marksView = el("div", "marks");
  const slotsView = el("div", "slots");

  root.append(header, editor, markButton, expandButton, personalizeButton,
              statusLine, marksView, slotsView);

  const schema = await loadFeedbackSchema(baseUrl);
  const session = new Session(api, {
    profile,
    feedbackSchema: schema,
    onChange: render,
    onError: (message, retry) => {
      statusLine.textContent = message;
      const retryButton = el("button", "retry", "retry");
      retryButton.onclick = () => retry();
      statusLine.append(" ", retryButton);
    },
  });

  editor.addEventListener("input", () => session.setText(editor.value));

  markButton.onclick = () => {
    const { selectionStart, selectionEnd } = editor;
    if (selectionStart === null || selectionEnd === null) return;
    session.mark(selectionStart, selectionEnd);
  };

  expandButton.onclick = () => void session.requestExpansions();
  personalizeButton.onclick = () => void session.triggerPersonalize();

  function render(state: SessionSnapshot): void {
    badge.textContent = `adapter v${state.adapterVersion}`;
    statusLine.textContent = state.status;
    expandButton.disabled = !state.marks.length || state.expandInFlight;
    personalizeButton.disabled = state.trainingInProgress;

    marksView.replaceChildren();
    state.marks.forEach((mark, index) => {
      const chip = el("span", "mark", `[ABB:${mark.text}]`);
      const remove = el("button", "unmark", "x");
      remove.onclick = () => session.unmark(index);
      chip.append(remove);
      marksView.append(chip);
    });

    slotsView.replaceChildren();
    state.slots.forEach((slot, slotIndex) => {
      const card = el("div", "slot");
      card.append(el("h3", "", `slot ${slotIndex}: [ABB:${slot.short_form ?? "?"}]`));
      const list = el("ol", "candidates");
      slot.candidates.forEach((candidate, candidateIndex) => {
        const item = el("li");
        const selected = state.selections[slotIndex];
        const isChosen = selected?.kind === "candidate" &&
          selected.index === candidateIndex;
        item.className = isChosen ? "chosen" : "";
        item.textContent =
          `${candidate.expansion}  (score ${candidate.score.toFixed(4)})`;
        item.onclick = () => {
          session.choose(slotIndex, candidateIndex);
          void session.submitFeedback(slotIndex);
        };
        list.append(item);
      });
      card.append(list);

      const correction = el("input", "correction") as HTMLInputElement;
      correction.placeholder = "free-text correction";
      const send = el("button", "", "correct") as HTMLButtonElement;
      send.onclick = () => {
        if (!correction.value) return;
        session.chooseFreeText(slotIndex, correction.value);
        void session.submitFeedback(slotIndex);
      };
      card.append(correction, send);
      slotsView.append(card);
    });
  }

  render(session.snapshot());
  return session;
}

declare global {
  interface Window {
    abbrankStart?: typeof startApp;
  }
}

if (typeof window !== "undefined") {
  window.abbrankStart = startApp;
  const root = document.getElementById("app");
  if (root) {
    void startApp(root);
  }
}
