(function () {
  var ISLAND_ID = "forge-runtime-config";
  var LOAD_COUNTER_KEY = "forge_loads";
  var memoryStore = {};
  var storageOk = true;

  function readConfig() {
    var el = document.getElementById(ISLAND_ID);
    if (!el) {
      return null;
    }
    try {
      return JSON.parse(el.textContent);
    } catch (err) {
      return null;
    }
  }

  function storeGet(key) {
    if (storageOk) {
      try {
        var v = window.localStorage.getItem(key);
        return v === null ? null : v;
      } catch (err) {
        storageOk = false;
        console.warn("forge-runtime: storage unavailable");
      }
    }
    return Object.prototype.hasOwnProperty.call(memoryStore, key) ? memoryStore[key] : null;
  }

  function storeSet(key, value) {
    if (storageOk) {
      try {
        window.localStorage.setItem(key, value);
        return;
      } catch (err) {
        storageOk = false;
        console.warn("forge-runtime: storage unavailable");
      }
    }
    memoryStore[key] = value;
  }

  function storeRemove(key) {
    if (storageOk) {
      try {
        window.localStorage.removeItem(key);
      } catch (err) {
        storageOk = false;
      }
    }
    delete memoryStore[key];
  }

  function storeKeys() {
    var keys = [];
    var k;
    if (storageOk) {
      try {
        for (var i = 0; i < window.localStorage.length; i++) {
          keys.push(window.localStorage.key(i));
        }
      } catch (err) {
        storageOk = false;
      }
    }
    for (k in memoryStore) {
      if (Object.prototype.hasOwnProperty.call(memoryStore, k) && keys.indexOf(k) < 0) {
        keys.push(k);
      }
    }
    return keys;
  }

  function makeState(prefix) {
    return {
      get: function (name) {
        var v = storeGet(prefix + name);
        return v === null ? "" : v;
      },
      set: function (name, value) {
        storeSet(prefix + name, String(value));
      },
      clear: function () {
        var keys = storeKeys();
        for (var i = 0; i < keys.length; i++) {
          if (keys[i].indexOf(prefix) === 0) {
            storeRemove(keys[i]);
          }
        }
      },
      snapshot: function () {
        var out = {};
        var keys = storeKeys();
        for (var i = 0; i < keys.length; i++) {
          if (keys[i].indexOf(prefix) === 0) {
            out[keys[i].slice(prefix.length)] = storeGet(keys[i]);
          }
        }
        return out;
      }
    };
  }

  var NUMBER_RE = new RegExp("^[+-]?([0-9]+[.]?[0-9]*|[.][0-9]+)([eE][+-]?[0-9]+)?$");
  var DATE_RE = new RegExp("^([0-9]{4})-([0-9]{2})-([0-9]{2})$");
  var WEEKDAYS = ["sun", "mon", "tue", "wed", "thu", "fri", "sat"];

  function toNumber(s) {
    var t = String(s === undefined || s === null ? "" : s).trim();
    if (!t || !NUMBER_RE.test(t)) {
      return null;
    }
    var n = Number(t);
    return isFinite(n) ? n : null;
  }

  function looseEqual(a, b) {
    var x = toNumber(a);
    var y = toNumber(b);
    if (x !== null && y !== null) {
      var scale = Math.max(Math.abs(x), Math.abs(y), 1);
      return Math.abs(x - y) <= 1e-9 * scale;
    }
    return String(a).trim().toLowerCase() === String(b).trim().toLowerCase();
  }

  function weekdayOf(s) {
    var m = DATE_RE.exec(String(s).trim());
    if (!m) {
      return null;
    }
    var y = Number(m[1]);
    var mo = Number(m[2]);
    var d = Number(m[3]);
    var date = new Date(Date.UTC(y, mo - 1, d));
    if (date.getUTCFullYear() !== y || date.getUTCMonth() !== mo - 1 || date.getUTCDate() !== d) {
      return null;
    }
    return WEEKDAYS[date.getUTCDay()];
  }

  function evalCondition(cond, state) {
    var read = function (field) {
      var v = state[field];
      return v === undefined || v === null ? "" : String(v);
    };
    var i;
    switch (cond.op) {
      case "always":
        return true;
      case "eq":
        return looseEqual(read(cond.field), cond.value);
      case "ne":
        return !looseEqual(read(cond.field), cond.value);
      case "in":
        for (i = 0; i < cond.values.length; i++) {
          if (looseEqual(read(cond.field), cond.values[i])) {
            return true;
          }
        }
        return false;
      case "between": {
        var raw = read(cond.field);
        var x = toNumber(raw);
        var lo = toNumber(cond.min);
        var hi = toNumber(cond.max);
        if (x !== null && lo !== null && hi !== null) {
          return lo <= x && x <= hi;
        }
        var t = raw.trim();
        return t !== "" && cond.min <= t && t <= cond.max;
      }
      case "weekday": {
        var wd = weekdayOf(read(cond.field));
        return wd !== null && cond.days.indexOf(wd) >= 0;
      }
      case "present":
        return read(cond.field).trim() !== "";
      case "all":
        for (i = 0; i < cond.of.length; i++) {
          if (!evalCondition(cond.of[i], state)) {
            return false;
          }
        }
        return true;
      case "any":
        for (i = 0; i < cond.of.length; i++) {
          if (evalCondition(cond.of[i], state)) {
            return true;
          }
        }
        return false;
      case "not":
        return !evalCondition(cond.cond, state);
    }
    throw new Error("forge-runtime: unknown condition " + cond.op);
  }

  function fromRaw(s) {
    var n = toNumber(s);
    return n === null ? String(s) : n;
  }

  function asNumber(v, ctx) {
    if (typeof v !== "number") {
      throw new Error("forge-runtime: " + ctx + " operand is not numeric");
    }
    return v;
  }

  function evalExpr(expr, state, vars) {
    var i;
    var acc;
    if (Object.prototype.hasOwnProperty.call(expr, "const")) {
      var c = expr["const"];
      return typeof c === "number" ? c : fromRaw(c);
    }
    if (expr.field !== undefined) {
      var fv = state[expr.field];
      return fromRaw(fv === undefined || fv === null ? "" : fv);
    }
    if (expr["var"] !== undefined) {
      if (!Object.prototype.hasOwnProperty.call(vars, expr["var"])) {
        throw new Error("forge-runtime: unknown variable " + expr["var"]);
      }
      return vars[expr["var"]];
    }
    if (expr.add) {
      acc = 0;
      for (i = 0; i < expr.add.length; i++) {
        acc += asNumber(evalExpr(expr.add[i], state, vars), "add");
      }
      return acc;
    }
    if (expr.mul) {
      acc = 1;
      for (i = 0; i < expr.mul.length; i++) {
        acc *= asNumber(evalExpr(expr.mul[i], state, vars), "mul");
      }
      return acc;
    }
    if (expr.sub) {
      return asNumber(evalExpr(expr.sub[0], state, vars), "sub") - asNumber(evalExpr(expr.sub[1], state, vars), "sub");
    }
    if (expr.div) {
      var den = asNumber(evalExpr(expr.div[1], state, vars), "div");
      if (den === 0) {
        throw new Error("forge-runtime: division by zero");
      }
      return asNumber(evalExpr(expr.div[0], state, vars), "div") / den;
    }
    if (expr["case"]) {
      for (i = 0; i < expr["case"].when.length; i++) {
        if (evalCondition(expr["case"].when[i]["if"], state)) {
          return evalExpr(expr["case"].when[i].then, state, vars);
        }
      }
      return evalExpr(expr["case"]["else"], state, vars);
    }
    throw new Error("forge-runtime: unknown expression");
  }

  function roundHalfUp(x, decimals) {
    var scale = Math.pow(10, decimals);
    var scaled = x * scale;
    var nudged = Math.abs(scaled) + 1e-9 * Math.max(Math.abs(scaled), 1);
    var sign = scaled < 0 ? -1 : 1;
    return (sign * Math.floor(nudged + 0.5)) / scale;
  }

  function formatValue(v, decimals) {
    if (typeof v !== "number") {
      return String(v);
    }
    if (decimals !== undefined && decimals !== null) {
      return roundHalfUp(v, decimals).toFixed(decimals);
    }
    return String(v);
  }

  function derive(derivations, state) {
    var vars = {};
    var out = {};
    for (var i = 0; i < derivations.length; i++) {
      var d = derivations[i];
      var v = evalExpr(d.expr, state, vars);
      vars[d.name] = v;
      out[d.name] = formatValue(v, d.decimals);
    }
    return out;
  }

  function decodeBase64(b64) {
    var bin = window.atob(b64);
    var pct = "";
    for (var i = 0; i < bin.length; i++) {
      pct += "%" + ("0" + bin.charCodeAt(i).toString(16)).slice(-2);
    }
    return decodeURIComponent(pct);
  }

  function computeCode(state, config) {
    var rules = config.judge_rules || [];
    for (var i = 0; i < rules.length; i++) {
      if (evalCondition(rules[i].when, state)) {
        var encoded = (config.encoded_codes || {})[rules[i].outcome];
        if (encoded === undefined) {
          throw new Error("forge-runtime: no code for outcome " + rules[i].outcome);
        }
        return decodeBase64(encoded);
      }
    }
    throw new Error("forge-runtime: no judge rule matched");
  }

  function formatCurrency(raw) {
    var n = toNumber(raw);
    if (n === null) {
      return String(raw);
    }
    var fixed = roundHalfUp(Math.abs(n), 2).toFixed(2);
    var parts = fixed.split(".");
    var intPart = parts[0];
    var grouped = "";
    for (var i = 0; i < intPart.length; i++) {
      if (i > 0 && (intPart.length - i) % 3 === 0) {
        grouped += ",";
      }
      grouped += intPart.charAt(i);
    }
    return (n < 0 ? "-" : "") + "$" + grouped + "." + parts[1];
  }

  function resolveBinding(name, state, config) {
    if (config.code_field && name === config.code_field) {
      return computeCode(state, config);
    }
    var derived = derive(config.derivations || [], state);
    if (Object.prototype.hasOwnProperty.call(derived, name)) {
      return derived[name];
    }
    return state[name] === undefined ? "" : state[name];
  }

  function renderBindings(config, stateApi) {
    var nodes = document.querySelectorAll("[data-forge-bind]");
    var state = stateApi.snapshot();
    for (var i = 0; i < nodes.length; i++) {
      var node = nodes[i];
      var value;
      try {
        value = resolveBinding(node.getAttribute("data-forge-bind"), state, config);
      } catch (err) {
        node.textContent = "Configuration error";
        node.setAttribute("data-forge-error", String(err && err.message));
        continue;
      }
      if (value === "") {
        continue;
      }
      if (node.getAttribute("data-forge-format") === "currency") {
        value = formatCurrency(value);
      }
      node.textContent = value;
    }
  }

  function bindFields(stateApi, onChange) {
    var fields = document.querySelectorAll("[data-forge-field]");
    for (var i = 0; i < fields.length; i++) {
      var el = fields[i];
      var name = el.getAttribute("data-forge-field");
      var stored = stateApi.get(name);
      if (el.type === "radio" || el.type === "checkbox") {
        if (stored !== "") {
          el.checked = el.value === stored;
        }
      } else if (stored !== "" && !el.value) {
        el.value = stored;
      }
      var handler = function (ev) {
        var t = ev.target;
        if ((t.type !== "radio" && t.type !== "checkbox") || t.checked) {
          stateApi.set(t.getAttribute("data-forge-field"), t.value);
          onChange();
        }
      };
      el.addEventListener("change", handler);
      el.addEventListener("input", handler);
    }
  }

  function clearInlineErrors(form) {
    var old = form.querySelectorAll("[data-forge-inline-error]");
    for (var i = 0; i < old.length; i++) {
      old[i].parentNode.removeChild(old[i]);
    }
  }

  function showInlineError(field, message) {
    var box = document.createElement("div");
    box.className = "forge-inline-error";
    box.setAttribute("role", "alert");
    box.setAttribute("data-forge-inline-error", "");
    box.textContent = "⊘ " + message;
    field.parentNode.insertBefore(box, field.nextSibling);
  }

  function validateInline(form) {
    clearInlineErrors(form);
    var ok = true;
    var fields = form.querySelectorAll("input, select, textarea");
    for (var i = 0; i < fields.length; i++) {
      var f = fields[i];
      var message = null;
      var value = String(f.value || "").trim();
      if (f.hasAttribute("required") && value === "") {
        message = f.getAttribute("data-forge-message") || "This field is required.";
      } else if (value !== "" && f.type === "number") {
        var n = toNumber(value);
        var min = f.getAttribute("min");
        var max = f.getAttribute("max");
        if (n === null || (min !== null && n < Number(min)) || (max !== null && n > Number(max))) {
          message = f.getAttribute("data-forge-range-message") || "Value must be between " + min + " and " + max + ".";
        }
      }
      if (message !== null) {
        showInlineError(f, message);
        ok = false;
      }
    }
    return ok;
  }

  function bindForms(stateApi) {
    var forms = document.querySelectorAll("form[data-forge-form]");
    for (var i = 0; i < forms.length; i++) {
      forms[i].addEventListener("submit", function (ev) {
        if (ev.defaultPrevented) {
          return;
        }
        var form = ev.target;
        if (!validateInline(form)) {
          ev.preventDefault();
          return;
        }
        var fields = form.querySelectorAll("[data-forge-field]");
        for (var j = 0; j < fields.length; j++) {
          var f = fields[j];
          if ((f.type !== "radio" && f.type !== "checkbox") || f.checked) {
            stateApi.set(f.getAttribute("data-forge-field"), f.value);
          }
        }
        var action = form.getAttribute("action");
        if (action) {
          ev.preventDefault();
          window.location.href = action;
        }
      });
    }
  }

  function mulberry32(seed) {
    var a = seed >>> 0;
    return function () {
      a = (a + 0x6d2b79f5) | 0;
      var t = Math.imul(a ^ (a >>> 15), 1 | a);
      t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
      return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
    };
  }

  function popupDelay(config, loadIndex) {
    var lo = config.popup_delay_min_ms;
    var hi = config.popup_delay_max_ms;
    var rng = mulberry32(((config.seed >>> 0) ^ Math.imul(loadIndex, 0x9e3779b1)) >>> 0);
    return lo + Math.floor(rng() * (hi - lo + 1));
  }

  function nextLoadIndex() {
    var current = toNumber(storeGet(LOAD_COUNTER_KEY));
    var index = current === null ? 0 : current;
    storeSet(LOAD_COUNTER_KEY, String(index + 1));
    return index;
  }

  function showCookieBanner(config) {
    var key = config.suppression_keys[0];
    if (storeGet(key) !== null) {
      return;
    }
    window.setTimeout(function () {
      if (storeGet(key) !== null) {
        return;
      }
      var banner = document.createElement("div");
      banner.className = "forge-cookie-banner";
      banner.setAttribute("data-forge-noise", "cookie");
      var text = document.createElement("span");
      text.textContent = "We use cookies to improve your experience.";
      var accept = document.createElement("button");
      accept.type = "button";
      accept.textContent = "Accept";
      accept.addEventListener("click", function () {
        storeSet(key, "1");
        banner.parentNode.removeChild(banner);
      });
      banner.appendChild(text);
      banner.appendChild(accept);
      document.body.appendChild(banner);
    }, config.cookie_delay_ms);
  }

  function schedulePopup(config, loadIndex) {
    var key = config.suppression_keys[1];
    if (storeGet(key) !== null) {
      return;
    }
    var popup = config.popup || {};
    window.setTimeout(function () {
      if (storeGet(key) !== null) {
        return;
      }
      var overlay = document.createElement("div");
      overlay.className = "forge-popup-overlay";
      overlay.setAttribute("data-forge-noise", "popup");
      var dialog = document.createElement("div");
      dialog.className = "forge-popup";
      var close = document.createElement("button");
      close.type = "button";
      close.setAttribute("aria-label", "Close");
      close.textContent = popup.close_label || "×";
      close.addEventListener("click", function () {
        storeSet(key, "1");
        overlay.parentNode.removeChild(overlay);
      });
      var title = document.createElement("h2");
      title.textContent = popup.title || "Special offer";
      var body = document.createElement("p");
      body.textContent = popup.body || "";
      dialog.appendChild(close);
      dialog.appendChild(title);
      dialog.appendChild(body);
      overlay.appendChild(dialog);
      document.body.appendChild(overlay);
    }, popupDelay(config, loadIndex));
  }

  function start() {
    var config = readConfig();
    if (!config) {
      return;
    }
    var stateApi = makeState(config.state_prefix || "");
    var rerender = function () {
      renderBindings(config, stateApi);
    };
    bindFields(stateApi, rerender);
    bindForms(stateApi);
    rerender();
    var loadIndex = nextLoadIndex();
    showCookieBanner(config);
    schedulePopup(config, loadIndex);
  }

  if (typeof __FORGE_TEST__ !== "undefined") {
    __FORGE_TEST__.api = {
      evalCondition: evalCondition,
      derive: derive,
      computeCode: computeCode,
      formatCurrency: formatCurrency,
      popupDelay: popupDelay,
      makeState: makeState,
      validateInline: validateInline,
      start: start
    };
  }

  if (document.readyState === "loading") {
    document.addEventListener("DOMContentLoaded", start);
  } else {
    start();
  }
})();
