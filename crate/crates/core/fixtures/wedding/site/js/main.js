// CelebrationVenues site script
(function () {
  var PREFIX = "geg_booking_";

  function save(name, value) {
    try {
      localStorage.setItem(PREFIX + name, value);
    } catch (e) {
      // storage disabled
    }
  }

  function load(name) {
    try {
      return localStorage.getItem(PREFIX + name) || "";
    } catch (e) {
      return "";
    }
  }

  function restoreFields() {
    var fields = document.querySelectorAll("[data-forge-field]");
    for (var i = 0; i < fields.length; i++) {
      var el = fields[i];
      var value = load(el.getAttribute("data-forge-field"));
      if (el.type === "radio") {
        el.checked = el.value === value;
      } else if (value) {
        el.value = value;
      }
      el.addEventListener("change", function (ev) {
        var t = ev.target;
        if (t.type !== "radio" || t.checked) {
          save(t.getAttribute("data-forge-field"), t.value);
        }
      });
    }
  }

  function validateBooking(ev) {
    var form = ev.target;
    var name = form.querySelector("[name=contact_name]");
    if (name && !name.value.trim()) {
      ev.preventDefault();
      alert("Please enter a contact name.");
      return;
    }
    var guests = form.querySelector("[name=guests]");
    if (guests && (Number(guests.value) < 50 || Number(guests.value) > 200)) {
      ev.preventDefault();
      alert("Guest count must be between 50 and 200.");
    }
  }

  document.addEventListener("DOMContentLoaded", function () {
    restoreFields();
    var booking = document.getElementById("booking-form");
    if (booking) {
      booking.addEventListener("submit", validateBooking);
    }
  });
})();
